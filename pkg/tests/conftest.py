"""Shared fixtures and independent oracles for the test suite."""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from thzhbf.config import Structure, SystemConfig

# acceptance outcomes collected by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []

DESK = SystemConfig()  # N_t=16, N_r=8, N_rf=4, N_s=2, K=8, b=3, 10 dB


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def desk():
    return DESK


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def desk_config(structure=Structure.FULLY_CONNECTED, **kw) -> SystemConfig:
    return DESK.replace(structure=structure, **kw)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_hpd(rng, n, shift=1.0):
    a = crandn(rng, n, n)
    return a.conj().T @ a + shift * np.eye(n)


def cofactor_det(m):
    """Determinant by Laplace expansion along the first row."""
    m = np.asarray(m)
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    total = 0
    for j in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1) ** j * m[0, j] * cofactor_det(minor)
    return total


def leibniz_det(m):
    """Determinant as a sum over permutations (n <= 5)."""
    n = m.shape[0]
    total = 0
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = (-1) ** inv
        for i in range(n):
            term = term * m[i, perm[i]]
        total += term
    return total


def element_objective_grid(channel, f_rf, f_bb, m, n, grid_size=4096, alpha=None):
    """Grid argmax over the phase of F_RF[n, m] of sum_k log2|Q[k]^-1 + snr F^H Hhat[k] F|.

    Only the column-m factor of the rate depends on that phase, so this is
    the single-element objective up to a constant, built directly from the
    determinant rather than from the workspace algebra.
    """
    from thzhbf.evalcore import default_alpha
    from thzhbf.numerics import inverse_hermitian_stack, logdet_hermitian_stack

    cfg = channel.config
    n_rf = f_rf.shape[1]
    if alpha is None:
        alpha = default_alpha(f_bb)
    q = f_bb @ np.swapaxes(f_bb, -1, -2).conj() + np.asarray(alpha)[:, None, None] * np.eye(n_rf)
    q_inv = inverse_hermitian_stack(0.5 * (q + np.swapaxes(q, -1, -2).conj()))
    grid = 2 * np.pi * np.arange(grid_size) / grid_size
    amp = 1.0 / np.sqrt(f_rf.shape[0])
    vals = np.empty(grid_size)
    f = f_rf.copy()
    for i, th in enumerate(grid):
        f[n, m] = amp * np.exp(1j * th)
        hf = channel.h @ f
        x = q_inv + cfg.snr * (np.swapaxes(hf, -1, -2).conj() @ hf)
        vals[i] = np.sum(logdet_hermitian_stack(0.5 * (x + np.swapaxes(x, -1, -2).conj())))
    return grid, vals


def exhaustive_fc_optimum(channel):
    """Best rate over every codebook analog matrix, each with its optimal F_BB."""
    from thzhbf.evalcore import PhaseCodebook, digital_precoder, fsum_mean, rate_per_subcarrier

    cfg = channel.config
    cb = PhaseCodebook(cfg.bits)
    n = cfg.N_t * cfg.N_rf_t
    best = -np.inf
    for idx in itertools.product(range(cb.size), repeat=n):
        f_rf = np.exp(1j * cb.phases[list(idx)]).reshape(cfg.N_t, cfg.N_rf_t) / np.sqrt(cfg.N_t)
        try:
            f_bb = digital_precoder(channel.h, f_rf, cfg.N_s, cfg.P_t)
        except ArithmeticError:
            continue  # rank-deficient analog matrix
        best = max(best, fsum_mean(rate_per_subcarrier(channel.h, f_rf @ f_bb, cfg.snr)))
    return best
