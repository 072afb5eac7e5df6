import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzhbf.numerics import (NumericalError, inv_sqrtm_hermitian, inverse_hermitian,
                             logdet_hermitian, right_singular_stack, svd)

from conftest import cofactor_det, crandn, random_hpd

seeds = st.integers(0, 2**32 - 1)


def gram_eigs_charpoly(m):
    """Eigenvalues of the 3x3 Gram matrix m^H m from its characteristic polynomial."""
    g = m.conj().T @ m
    c1 = np.real(np.trace(g))
    c2 = sum(np.real(g[i, i] * g[j, j] - g[i, j] * g[j, i]) for i in range(3) for j in range(i + 1, 3))
    c3 = np.real(cofactor_det(g))
    roots = np.roots([1.0, -c1, c2, -c3])
    return np.sort(np.real(roots))[::-1]


class TestSvd:
    def test_identity(self):
        u, s, v = svd(np.eye(2))
        assert np.allclose(s, [1, 1])
        w = u @ v.conj().T
        assert np.allclose(w @ w.conj().T, np.eye(2))

    def test_zero(self):
        _, s, _ = svd(np.zeros((3, 2)))
        assert np.array_equal(s, [0, 0])

    def test_random_against_charpoly(self, rng):
        m = crandn(rng, 4, 3)
        u, s, v = svd(m)
        recon = u @ np.diag(s) @ v.conj().T
        assert np.linalg.norm(recon - m) / np.linalg.norm(m) < 1e-9
        assert np.allclose(s ** 2, gram_eigs_charpoly(m), rtol=1e-9, atol=1e-9)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(NumericalError):
            svd(np.zeros((0, 3)))
        with pytest.raises(NumericalError):
            svd(np.array([[np.nan, 1.0]]))

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(1, 6))
    def test_reconstruction_property(self, seed, r, c):
        m = crandn(np.random.default_rng(seed), r, c)
        u, s, v = svd(m)
        assert np.linalg.norm(u @ np.diag(s) @ v.conj().T - m) <= 1e-9 * max(1.0, np.linalg.norm(m))
        assert np.all(s >= 0) and np.all(np.diff(s) <= 0)
        k = min(r, c)
        assert np.allclose(u.conj().T @ u, np.eye(k), atol=1e-9)
        assert np.allclose(v.conj().T @ v, np.eye(k), atol=1e-9)

    def test_right_singular_stack_matches_svd(self, rng):
        m = crandn(rng, 3, 4, 5)
        v = right_singular_stack(m, 2)
        for k in range(3):
            _, s, vk = svd(m[k])
            # equal up to a phase per vector
            for j in range(2):
                assert abs(abs(np.vdot(vk[:, j], v[k, :, j])) - 1) < 1e-9


class TestLogdet:
    def test_identity(self):
        assert logdet_hermitian(np.eye(5)) == 0.0

    def test_diagonal(self):
        assert logdet_hermitian(np.diag([2.0, 4.0])) == pytest.approx(3.0, abs=1e-12)

    def test_random_against_cofactor(self, rng):
        m = random_hpd(rng, 3)
        oracle = np.log2(np.real(cofactor_det(m)))
        assert abs(logdet_hermitian(m) - oracle) < 1e-9

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_cofactor_up_to_four(self, rng, n):
        m = random_hpd(rng, n, shift=0.5)
        assert abs(logdet_hermitian(m) - np.log2(np.real(cofactor_det(m)))) < 1e-9

    def test_not_positive_definite(self):
        with pytest.raises(NumericalError, match="positive definite"):
            logdet_hermitian(np.diag([1.0, -1.0]))

    def test_not_hermitian(self):
        with pytest.raises(NumericalError, match="Hermitian"):
            logdet_hermitian(np.array([[1.0, 1.0], [0.0, 1.0]]))

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(1, 5), st.integers(1, 5))
    def test_block_diagonal_additivity(self, seed, n, m):
        rng = np.random.default_rng(seed)
        a, b = random_hpd(rng, n), random_hpd(rng, m)
        blk = np.zeros((n + m, n + m), dtype=complex)
        blk[:n, :n], blk[n:, n:] = a, b
        assert abs(logdet_hermitian(a) + logdet_hermitian(b) - logdet_hermitian(blk)) < 1e-9


class TestInverse:
    def test_identity(self):
        assert np.allclose(inverse_hermitian(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert np.allclose(inverse_hermitian(np.diag([2.0, 5.0])), np.diag([0.5, 0.2]))

    def test_random_residual(self, rng):
        m = random_hpd(rng, 4)
        assert np.max(np.abs(m @ inverse_hermitian(m) - np.eye(4))) < 1e-8

    def test_singular_names_quantity(self):
        with pytest.raises(NumericalError, match="C\\[k\\]"):
            inverse_hermitian(np.ones((2, 2)), name="C[k]")

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(1, 6))
    def test_double_inverse(self, seed, n):
        a = random_hpd(np.random.default_rng(seed), n)
        assert np.max(np.abs(inverse_hermitian(inverse_hermitian(a)) - a)) < 1e-7

    def test_inv_sqrtm(self, rng):
        a = random_hpd(rng, 3)
        r = inv_sqrtm_hermitian(a)
        assert np.allclose(r @ a @ r, np.eye(3), atol=1e-10)
