"""Dense complex-matrix kernels.

Thin, checked wrappers over LAPACK (through numpy) for the three
factorizations the rest of the package needs. Every function accepts a
single matrix; the ``*_stack`` variants accept a ``(..., n, n)`` stack and
are what the solvers call in their per-subcarrier loops.
"""
from __future__ import annotations

import numpy as np

from .constants import CONDITION_CAP, HERMITIAN_TOL


class NumericalError(ArithmeticError):
    """Raised when a factorization fails or its input is outside its domain."""


def _check_finite(m: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(m)):
        raise NumericalError(f"{what} has non-finite entries")


def _hermitian_gap(m: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return float(np.max(np.abs(m - np.swapaxes(m, -1, -2).conj()))) / scale if m.size else 0.0


def svd(m):
    """Thin SVD ``m = U @ diag(s) @ V^H``.

    Returns ``U`` (rows x r), ``s`` descending non-negative (r,), and ``V``
    (cols x r) with ``r = min(rows, cols)``. Note that ``V`` is returned,
    not ``V^H``.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.size == 0:
        raise NumericalError("svd needs a non-empty 2-D matrix")
    _check_finite(m, "svd input")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return u, s, vh.conj().T


def right_singular_stack(m: np.ndarray, n: int) -> np.ndarray:
    """Leading ``n`` right singular vectors of every matrix in a stack.

    Returns shape ``(..., cols, n)``.
    """
    try:
        _, _, vh = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return np.swapaxes(vh[..., :n, :], -1, -2).conj()


def logdet_hermitian(m) -> float:
    """log2 of the determinant of a Hermitian positive-definite matrix.

    Computed from the Cholesky factor, so it never forms the determinant
    itself and does not overflow for large well-conditioned inputs.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericalError("logdet_hermitian needs a square matrix")
    return float(logdet_hermitian_stack(m))


def logdet_hermitian_stack(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.shape[-1] == 0:
        return np.zeros(m.shape[:-2])
    _check_finite(m, "logdet input")
    if _hermitian_gap(m) > HERMITIAN_TOL:
        raise NumericalError("logdet input is not Hermitian")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("logdet input is not positive definite") from exc
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log2(diag), axis=-1)


def inverse_hermitian(m, name: str = "matrix", cond_cap: float = CONDITION_CAP) -> np.ndarray:
    """Inverse of a Hermitian, well-conditioned matrix.

    ``name`` is used in the error message so the caller can tell which
    intermediate quantity went singular.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericalError(f"{name}: inverse needs a square matrix")
    return inverse_hermitian_stack(m, name=name, cond_cap=cond_cap)


def inverse_hermitian_stack(m: np.ndarray, name: str = "matrix",
                            cond_cap: float = CONDITION_CAP) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    n = m.shape[-1]
    if n == 0:
        return m.copy()
    _check_finite(m, name)
    if _hermitian_gap(m) > HERMITIAN_TOL:
        raise NumericalError(f"{name} is not Hermitian")
    herm = 0.5 * (m + np.swapaxes(m, -1, -2).conj())
    w = np.linalg.eigvalsh(herm)
    wmax = np.max(np.abs(w), axis=-1)
    wmin = np.min(np.abs(w), axis=-1)
    if np.any(wmin == 0) or np.any(wmax / np.where(wmin == 0, 1.0, wmin) > cond_cap):
        raise NumericalError(f"{name} is singular or ill-conditioned "
                             f"(condition > {cond_cap:g})")
    inv = np.linalg.solve(herm, np.broadcast_to(np.eye(n), herm.shape))
    return 0.5 * (inv + np.swapaxes(inv, -1, -2).conj())


def inv_sqrtm_hermitian(m: np.ndarray) -> np.ndarray:
    """``m^{-1/2}`` for a Hermitian PD matrix (or stack) by eigendecomposition."""
    w, v = np.linalg.eigh(m)
    if np.any(w <= 0):
        raise NumericalError("matrix square root of a non-positive-definite matrix")
    return (v * (1.0 / np.sqrt(w))[..., None, :]) @ np.swapaxes(v, -1, -2).conj()
