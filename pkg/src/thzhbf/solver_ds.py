"""Dynamic-subarray hybrid precoding by row-wise selection search.

The analog precoder is written ``F_RF = S F_D``: ``F_D`` is a block-diagonal
dictionary holding every codebook phase for every RF chain and ``S`` is a
binary selection matrix with at most one nonzero per row. Rows of ``S`` are
chosen one at a time, in ascending order, by exhaustive search over the
``N_rf * 2^b + 1`` candidate rows (one-hot rows plus the all-zero row).
"""
from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import kernels
from .channel import ChannelRealization
from .config import STREAM_DS_INIT, Structure, SystemConfig, make_rng
from .constants import MAX_ITERS, REL_TOL
from .evalcore import (HybridPrecoder, PhaseCodebook, RankDeficientError, default_alpha,
                       digital_precoder, spectral_efficiency)
from .numerics import inverse_hermitian_stack, logdet_hermitian_stack
from .solver_fc import SolverReport

TIE_TOL = 1e-12
REPAIR_SHORTLIST = 8


def dictionary(n_t: int, n_rf: int, bits: int) -> np.ndarray:
    """Block-diagonal ``F_D`` of shape (N_rf * 2^b, N_rf)."""
    cb = PhaseCodebook(bits)
    f_d = np.zeros((n_rf * cb.size, n_rf), dtype=complex)
    for c in range(n_rf):
        f_d[c * cb.size:(c + 1) * cb.size, c] = np.exp(1j * cb.phases) / np.sqrt(n_t)
    return f_d


@dataclasses.dataclass
class SelectionState:
    """Binary selection matrix ``s`` (N_t, N_rf * 2^b) and its dictionary."""

    s: np.ndarray
    n_rf: int
    bits: int

    def __post_init__(self):
        self.s = np.asarray(self.s).astype(np.int8)
        if self.s.shape[1] != self.n_rf * (1 << self.bits):
            raise ValueError("selection matrix width must be N_rf * 2^b")
        if np.any((self.s != 0) & (self.s != 1)):
            raise ValueError("selection entries must be 0 or 1")
        if np.any(self.s.sum(axis=1) > 1):
            raise ValueError("each selection row may pick at most one dictionary column")

    @property
    def n_t(self) -> int:
        return self.s.shape[0]

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def f_dict(self) -> np.ndarray:
        return dictionary(self.n_t, self.n_rf, self.bits)

    def choice(self) -> np.ndarray:
        """Dictionary column per row, -1 for an all-zero row."""
        on = self.s.any(axis=1)
        return np.where(on, self.s.argmax(axis=1), -1).astype(np.int64)

    @classmethod
    def from_choice(cls, choice, n_rf: int, bits: int) -> "SelectionState":
        choice = np.asarray(choice, dtype=np.int64)
        s = np.zeros((choice.size, n_rf * (1 << bits)), dtype=np.int8)
        on = choice >= 0
        s[np.flatnonzero(on), choice[on]] = 1
        return cls(s, n_rf, bits)

    def chain_counts(self) -> np.ndarray:
        """Antennas attached to each RF chain."""
        c = self.choice()
        return np.bincount(c[c >= 0] // self.levels, minlength=self.n_rf)


def expand_selection(state: SelectionState) -> np.ndarray:
    """``F_RF = S F_D``; an all-zero row of ``S`` gives a disconnected antenna."""
    return state.s.astype(float) @ state.f_dict


def row_candidates(config: SystemConfig) -> list[np.ndarray]:
    """Every one-hot selection row, followed by the all-zero row."""
    n = config.N_rf_t * (1 << config.bits)
    eye = np.eye(n, dtype=np.int8)
    return [eye[j] for j in range(n)] + [np.zeros(n, dtype=np.int8)]


@dataclasses.dataclass
class DsWorkspace:
    """Row-search state: ``d`` is D_i[k], the running sum over processed rows."""

    hhat: np.ndarray  # SNR-scaled H^H H, (K, N_t, N_t)
    q: np.ndarray
    q_inv: np.ndarray
    d: np.ndarray
    row: int = 0

    @classmethod
    def start(cls, channel: ChannelRealization, f_bb: np.ndarray, alpha=None) -> "DsWorkspace":
        cfg = channel.config
        if alpha is None:
            alpha = default_alpha(f_bb)
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (f_bb.shape[0],))
        q = f_bb @ np.swapaxes(f_bb, -1, -2).conj() + alpha[:, None, None] * np.eye(f_bb.shape[1])
        q = 0.5 * (q + np.swapaxes(q, -1, -2).conj())
        q_inv = inverse_hermitian_stack(q, name="Q_DS[k]")
        return cls(cfg.snr * channel.gram(), q, q_inv, q_inv.copy())

    def increment(self, state: SelectionState, i: int, candidate: np.ndarray) -> np.ndarray:
        """Change of D[k] when row ``i`` takes ``candidate`` and rows ``< i`` are fixed."""
        f_d = state.f_dict
        row = np.asarray(candidate, dtype=float) @ f_d  # (N_rf,)
        prev = expand_selection(state)[:i]
        u = np.einsum("lc,kl->kc", prev.conj(), self.hhat[:, :i, i])
        x = np.einsum("kc,d->kcd", u, row) + np.einsum("c,kd->kcd", row.conj(), u.conj())
        x += np.real(self.hhat[:, i, i])[:, None, None] * np.outer(row.conj(), row)
        return x

    def advance(self, state: SelectionState, i: int) -> None:
        """Fold the chosen row ``i`` into D (rows must be processed in order)."""
        if i != self.row:
            raise ValueError(f"workspace is at row {self.row}, not {i}")
        self.d = self.d + self.increment(state, i, state.s[i])
        self.row += 1


def score_row(ws: DsWorkspace, channel: ChannelRealization, state: SelectionState, i: int,
              candidate: np.ndarray) -> float:
    """Mean over subcarriers of ``log2|I + D_i[k]^{-1} X_i[k]|`` for one candidate row.

    ``X_i[k]`` collects the diagonal term of ``H^H H`` at row ``i`` and the cross
    terms against the rows already fixed; the all-zero row scores 0.
    """
    if i != ws.row:
        raise ValueError(f"workspace is at row {ws.row}, not {i}")
    if not np.any(candidate):
        return 0.0
    x = ws.increment(state, i, candidate)
    # |I + D^{-1} X| = |D + X| / |D|, both Hermitian positive definite
    dx = ws.d + x
    val = logdet_hermitian_stack(0.5 * (dx + np.swapaxes(dx, -1, -2).conj()))
    val -= logdet_hermitian_stack(ws.d)
    return float(np.mean(val))


def init_ds(config: SystemConfig, seed: int | None = None) -> SelectionState:
    """Random valid selection: every antenna on, every RF chain used, uniform phases.

    Chains are dealt by shuffling a balanced assignment, so each chain gets
    ``N_t / N_rf`` antennas (rounded) and none starts empty.
    """
    rng = make_rng(config.rng_seed if seed is None else seed, STREAM_DS_INIT)
    levels = 1 << config.bits
    chains = rng.permutation(np.arange(config.N_t) % config.N_rf_t)
    phases = rng.integers(0, levels, size=config.N_t)
    return SelectionState.from_choice(chains * levels + phases, config.N_rf_t, config.bits)


def _rate_of(channel, f_rf, structure, codebook):
    cfg = channel.config
    f_bb = digital_precoder(channel.h, f_rf, cfg.N_s, cfg.P_t)
    prec = HybridPrecoder(f_rf, f_bb, structure)
    return spectral_efficiency(channel, prec, codebook)[0], prec


def repair_empty_chains(channel: ChannelRealization, hhat: np.ndarray, q_inv: np.ndarray,
                        choice: np.ndarray, n_rf: int, bits: int,
                        shortlist: int = REPAIR_SHORTLIST) -> int:
    """Give every empty RF chain its best single (antenna, phase).

    Every move is screened with the decoupled objective
    ``mean_k log2|Q^{-1} + F^H Hhat F|`` under the sweep's ``Q`` (``hhat`` is
    SNR-scaled); once no other chain is empty, the ``shortlist`` best moves
    are re-ranked by the achievable rate with a fresh ``F_BB``. Antennas
    whose removal would empty their own chain are not moved. Mutates
    ``choice``; returns the number of chains repaired.
    """
    levels = 1 << bits
    n_t = choice.size
    f_d = dictionary(n_t, n_rf, bits)
    repaired = 0
    while True:
        on = choice >= 0
        counts = np.bincount(choice[on] // levels, minlength=n_rf)
        empty = np.flatnonzero(counts == 0)
        if not empty.size:
            return repaired
        c = int(empty[0])
        movable = np.array([i for i in range(n_t)
                            if choice[i] < 0 or counts[choice[i] // levels] > 1], dtype=np.int64)
        if not movable.size:
            raise RankDeficientError("cannot give every RF chain an antenna (N_t < N_rf)")
        f = SelectionState.from_choice(choice, n_rf, bits).s.astype(float) @ f_d
        base = q_inv + f.conj().T @ hhat @ f  # (K, R, R)
        u = np.einsum("lr,kli->kir", f.conj(), hhat[:, :, movable])  # F^H Hhat e_i
        new_rows = f_d[c * levels:(c + 1) * levels]  # (L, R)
        delta = new_rows[None, :, :] - f[movable][:, None, :]  # (M, L, R)
        h_ii = np.real(hhat[:, movable, movable])  # (K, M)
        a = (base[:, None, None]
             + np.einsum("kmr,mls->kmlrs", u, delta)
             + np.einsum("mlr,kms->kmlrs", delta.conj(), u.conj())
             + h_ii[:, :, None, None, None] * np.einsum("mlr,mls->mlrs", delta.conj(), delta)[None])
        a = 0.5 * (a + np.swapaxes(a, -1, -2).conj())
        score = np.linalg.slogdet(a)[1].mean(axis=0).ravel()  # (M * L,)
        order = np.argsort(-score, kind="stable")
        pick = int(order[0])
        if empty.size == 1 and shortlist > 1:
            best = -np.inf
            for j in order[:shortlist]:
                m, p = divmod(int(j), levels)
                trial = choice.copy()
                trial[movable[m]] = c * levels + p
                f_t = SelectionState.from_choice(trial, n_rf, bits).s.astype(float) @ f_d
                rate, _ = _rate_of(channel, f_t, Structure.DYNAMIC_SUBARRAY, PhaseCodebook(bits))
                if rate > best:
                    best, pick = rate, int(j)
        m, p = divmod(pick, levels)
        choice[movable[m]] = c * levels + p
        repaired += 1


def solve_ds(channel: ChannelRealization, config: SystemConfig | None = None, *,
             state0: SelectionState | None = None, max_iters: int = MAX_ITERS,
             rel_tol: float = REL_TOL, backend: str | None = None, callback=None):
    """Dynamic-subarray alternating optimization.

    Each outer iteration sweeps the rows once with ``F_BB`` fixed, repairs
    any RF chain left without antennas, then refreshes ``F_BB``. A sweep
    that does not raise the rate is discarded and ends the loop.
    ``callback(precoder)`` is called with the kept state after every sweep.
    Returns ``(HybridPrecoder, SolverReport)``.
    """
    cfg = config or channel.config
    if cfg.structure is not Structure.DYNAMIC_SUBARRAY:
        raise ValueError("solve_ds needs a DynamicSubarray config")
    if channel.h.shape != (cfg.K, cfg.N_r, cfg.N_t):
        raise ValueError("channel dimensions do not match the config")
    kern = kernels.get(backend)
    codebook = PhaseCodebook(cfg.bits)
    start = time.perf_counter()
    state = state0 or init_ds(cfg)
    choice = state.choice()
    hhat = np.ascontiguousarray(cfg.snr * channel.gram())
    rate0, prec = _rate_of(channel, expand_selection(state), Structure.DYNAMIC_SUBARRAY, codebook)
    rate = prev = rate0
    trace: list[float] = []
    converged = False
    repairs = rejected = 0
    it = 0
    for it in range(1, max_iters + 1):
        ws = DsWorkspace.start(channel, prec.f_bb)
        trial = choice.copy()
        kern.ds_sweep(hhat, np.ascontiguousarray(ws.q_inv), trial, cfg.N_rf_t,
                      codebook.size, TIE_TOL)
        fixed = repair_empty_chains(channel, hhat, ws.q_inv, trial, cfg.N_rf_t, cfg.bits)
        new_rate, new_prec = _rate_of(channel, expand_selection(
            SelectionState.from_choice(trial, cfg.N_rf_t, cfg.bits)), Structure.DYNAMIC_SUBARRAY, codebook)
        if callback is not None:
            callback(new_prec if new_rate > rate else prec)
        if new_rate <= rate:
            # the sweep is a deterministic function of (S, F_BB): repeating it
            # from the kept state would give the same rejected result
            rejected += 1
            trace.append(rate)
            converged = True
            break
        choice, prec, rate = trial, new_prec, new_rate
        repairs += fixed
        trace.append(rate)
        if abs(rate - prev) <= rel_tol * abs(prev):
            converged = True
            break
        prev = rate
    report = SolverReport(trace, it, converged, time.perf_counter() - start, rate0,
                          0, repairs, rejected, backend or kernels.BACKEND)
    return prec, report
