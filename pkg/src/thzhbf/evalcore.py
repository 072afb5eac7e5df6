"""Phase codebook, digital-precoder update and the rate objective."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .channel import ChannelRealization
from .config import Structure
from .constants import ALPHA_REL, MODULUS_TOL, PHASE_TOL, POWER_TOL
from .numerics import (NumericalError, inv_sqrtm_hermitian, inverse_hermitian_stack,
                       logdet_hermitian_stack)

TWO_PI = 2.0 * np.pi


class ConstraintViolation(ValueError):
    """A precoder broke one of its structural or power constraints."""


class RankDeficientError(NumericalError):
    pass


@dataclasses.dataclass(frozen=True)
class PhaseCodebook:
    bits: int

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("codebook needs at least one bit")

    @property
    def size(self) -> int:
        return 2 ** self.bits

    @property
    def step(self) -> float:
        return TWO_PI / self.size

    @property
    def phases(self) -> np.ndarray:
        return self.step * np.arange(self.size)

    def index(self, phi):
        """Index of the nearest codebook phase, honoring the 2*pi wrap.

        Ties go to the smaller phase, so pi/4 with two bits maps to 0, and
        an exact tie against the 2*pi boundary goes to the top codeword.
        """
        x = np.mod(np.asarray(phi, dtype=float), TWO_PI) / self.step
        lo = np.floor(x)
        idx = np.where(x - lo > 0.5, lo + 1, lo).astype(np.int64)
        return np.mod(idx, self.size)

    def quantize(self, phi):
        return self.index(phi) * self.step

    def contains(self, phi, tol: float = PHASE_TOL) -> np.ndarray:
        x = np.mod(np.asarray(phi, dtype=float), TWO_PI)
        d = np.abs(x - self.quantize(x))
        return np.minimum(d, TWO_PI - d) <= tol


def quantize_phase(phi: float, codebook: PhaseCodebook) -> float:
    return float(codebook.quantize(phi))


def unit_entries(phases, n_t: int) -> np.ndarray:
    return np.exp(1j * np.asarray(phases, dtype=float)) / np.sqrt(n_t)


@dataclasses.dataclass
class HybridPrecoder:
    f_rf: np.ndarray  # (N_t, N_rf), frequency-flat
    f_bb: np.ndarray  # (K, N_rf, N_s)
    structure: Structure

    @property
    def n_t(self) -> int:
        return self.f_rf.shape[0]

    @property
    def n_rf(self) -> int:
        return self.f_rf.shape[1]

    @property
    def n_s(self) -> int:
        return self.f_bb.shape[-1]

    def combined(self) -> np.ndarray:
        """``F_RF F_BB[k]`` for every subcarrier, shape (K, N_t, N_s)."""
        return self.f_rf @ self.f_bb

    def check(self, codebook: PhaseCodebook | None, p_t: float) -> None:
        """Raise ConstraintViolation naming the first broken constraint.

        ``codebook=None`` skips the discrete-phase check (continuous phases).
        """
        check_analog(self.f_rf, self.structure, codebook)
        power = np.sum(np.abs(self.combined()) ** 2, axis=(1, 2))
        target = self.n_s * p_t
        bad = np.flatnonzero(np.abs(power - target) > POWER_TOL * max(1.0, target))
        if bad.size:
            k = int(bad[0])
            raise ConstraintViolation(f"power: ||F_RF F_BB[{k + 1}]||_F^2 = {power[k]:.12g}, "
                                      f"expected N_s*P_t = {target:.12g}")


def block_mask(n_t: int, n_rf: int) -> np.ndarray:
    """Boolean (N_t, N_rf) mask of the fixed partially-connected layout."""
    block = n_t // n_rf
    mask = np.zeros((n_t, n_rf), dtype=bool)
    for i in range(n_rf):
        mask[i * block:(i + 1) * block, i] = True
    return mask


def check_analog(f_rf: np.ndarray, structure: Structure, codebook: PhaseCodebook | None) -> None:
    n_t, n_rf = f_rf.shape
    if not np.all(np.isfinite(f_rf)):
        raise ConstraintViolation("finite: F_RF has non-finite entries")
    target = 1.0 / math.sqrt(n_t)
    mag = np.abs(f_rf)
    structure = Structure(structure)
    if structure is Structure.FULLY_CONNECTED:
        active = np.ones_like(mag, dtype=bool)
    elif structure is Structure.PARTIALLY_CONNECTED:
        if n_t % n_rf:
            raise ConstraintViolation("block-diagonal: N_rf does not divide N_t")
        active = block_mask(n_t, n_rf)
        if np.any(mag[~active] != 0):
            i, j = np.argwhere((mag != 0) & ~active)[0]
            raise ConstraintViolation(f"block-diagonal: F_RF[{i},{j}] lies off its subarray")
    else:
        active = mag > 0
        nnz = active.sum(axis=1)
        if np.any(nnz > 1):
            i = int(np.flatnonzero(nnz > 1)[0])
            raise ConstraintViolation(f"row-0-norm: row {i} of F_RF drives {nnz[i]} RF chains")
    off = active & (np.abs(mag - target) > MODULUS_TOL)
    if np.any(off):
        i, j = np.argwhere(off)[0]
        raise ConstraintViolation(f"modulus: |F_RF[{i},{j}]| = {mag[i, j]:.15g}, expected {target:.15g}")
    if codebook is not None and np.any(active):
        ok = codebook.contains(np.angle(f_rf[active]))
        if not np.all(ok):
            i, j = np.argwhere(active)[np.flatnonzero(~ok)[0]]
            raise ConstraintViolation(f"codebook: phase of F_RF[{i},{j}] is not a {codebook.bits}-bit phase")


def default_alpha(f_bb: np.ndarray) -> np.ndarray:
    """Per-subcarrier regularizer, ALPHA_REL times the mean diagonal of F_BB F_BB^H."""
    scale = np.sum(np.abs(f_bb) ** 2, axis=(-2, -1)) / f_bb.shape[-2]
    return ALPHA_REL * np.where(scale > 0, scale, 1.0)


def digital_precoder(h: np.ndarray, f_rf: np.ndarray, n_s: int, p_t: float) -> np.ndarray:
    """Optimal digital precoders for a fixed analog precoder.

    ``h`` is (K, N_r, N_t). Returns F_BB with shape (K, N_rf, N_s),
    normalized so that ``||F_RF F_BB[k]||_F^2 = n_s * p_t``.
    """
    n_rf = f_rf.shape[1]
    if n_s > n_rf:
        raise ValueError(f"N_s={n_s} exceeds N_rf={n_rf}")
    norms = np.linalg.norm(f_rf, axis=0)
    if np.any(norms == 0):
        col = int(np.flatnonzero(norms == 0)[0])
        raise RankDeficientError(f"F_RF column {col} is all zero; F_RF^H F_RF is singular")
    gram = f_rf.conj().T @ f_rf
    w = np.linalg.eigvalsh(gram)
    if w[0] <= 1e-12 * w[-1]:
        # name the column that is most nearly a combination of the others
        resid = [np.linalg.lstsq(np.delete(f_rf, c, axis=1), f_rf[:, c], rcond=None)[1]
                 for c in range(n_rf)] if n_rf > 1 else [np.zeros(1)]
        resid = [float(r[0]) if np.size(r) else 0.0 for r in resid]
        col = int(np.argmin(resid))
        raise RankDeficientError(f"F_RF is rank deficient; column {col} is dependent on the others")
    a_isqrt = inv_sqrtm_hermitian(gram)
    h_eff = h @ (f_rf @ a_isqrt)
    _, _, vh = np.linalg.svd(h_eff, full_matrices=True)
    v = np.swapaxes(vh[:, :n_s, :], -1, -2).conj()
    f_bb = a_isqrt @ v
    power = np.sum(np.abs(f_rf @ f_bb) ** 2, axis=(1, 2))
    return f_bb * np.sqrt(n_s * p_t / power)[:, None, None]


def update_digital(channel: ChannelRealization, f_rf: np.ndarray) -> np.ndarray:
    cfg = channel.config
    return digital_precoder(channel.h, f_rf, cfg.N_s, cfg.P_t)


def rate_per_subcarrier(h: np.ndarray, w: np.ndarray, snr: float) -> np.ndarray:
    """``log2|I + snr H W W^H H^H|`` per subcarrier, via the small Gram form."""
    hw = h @ w
    n_s = w.shape[-1]
    x = np.eye(n_s) + snr * (np.swapaxes(hw, -1, -2).conj() @ hw)
    return logdet_hermitian_stack(0.5 * (x + np.swapaxes(x, -1, -2).conj()))


def fsum_mean(values) -> float:
    values = np.asarray(values, dtype=float)
    return math.fsum(values.tolist()) / values.size


def spectral_efficiency(channel: ChannelRealization, precoder: HybridPrecoder,
                        codebook: PhaseCodebook | None = None, check: bool = True):
    """Average achievable rate (bits/s/Hz) and its per-subcarrier values."""
    cfg = channel.config
    if check:
        precoder.check(codebook, cfg.P_t)
    per_k = rate_per_subcarrier(channel.h, precoder.combined(), cfg.snr)
    return fsum_mean(per_k), per_k


def decoupled_rate(channel: ChannelRealization, f_rf: np.ndarray, f_bb: np.ndarray,
                   alpha=None) -> float:
    """Rate in the split form ``log|Q| + log|Q^{-1} + snr F^H H^H H F|``.

    ``Q = F_BB F_BB^H + alpha I``. Used to cross-check spectral_efficiency;
    the two agree up to a term of order ``alpha``.
    """
    cfg = channel.config
    n_rf = f_rf.shape[1]
    if alpha is None:
        alpha = default_alpha(f_bb)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (f_bb.shape[0],))
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    q = f_bb @ np.swapaxes(f_bb, -1, -2).conj() + alpha[:, None, None] * np.eye(n_rf)
    q_inv = inverse_hermitian_stack(q, name="Q[k]")
    hf = channel.h @ f_rf
    inner = q_inv + cfg.snr * (np.swapaxes(hf, -1, -2).conj() @ hf)
    inner = 0.5 * (inner + np.swapaxes(inner, -1, -2).conj())
    per_k = logdet_hermitian_stack(q) + logdet_hermitian_stack(inner)
    return fsum_mean(per_k)
