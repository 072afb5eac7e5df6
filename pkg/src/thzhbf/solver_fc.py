"""Alternating hybrid precoding for the fully-connected structure.

Each outer iteration visits the analog columns in order. For column ``m``
the rate is split as ``log|Q| + log|C| + log M`` where only ``M`` depends
on the column; its phases are then optimized one element at a time and
snapped to the codebook, after which the digital precoders are refreshed.
"""
from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import kernels
from .channel import ChannelRealization
from .config import STREAM_FC_INIT, Structure, SystemConfig, make_rng
from .constants import MAX_ITERS, REL_TOL
from .evalcore import (HybridPrecoder, PhaseCodebook, RankDeficientError, default_alpha,
                       digital_precoder, spectral_efficiency, unit_entries)
from .numerics import NumericalError, inverse_hermitian_stack, logdet_hermitian_stack

DEFAULT_EXTRA_STARTS = 2
INIT_REDRAWS = 100
RANK_TOL = 1e-12  # same relative eigenvalue floor as the digital update


@dataclasses.dataclass
class FcWorkspace:
    """Per-subcarrier quantities for updating analog column ``m``.

    ``t`` holds the argument of the column-dependent log-determinant (a
    positive scalar per subcarrier); ``m_log = log2(t)``.
    """

    m: int
    q: np.ndarray
    q_inv: np.ndarray
    c: np.ndarray
    h_em: np.ndarray
    g: np.ndarray
    d: np.ndarray
    t: np.ndarray
    hhat: np.ndarray

    @property
    def m_log(self) -> np.ndarray:
        return np.log2(self.t)

    def split_rate(self) -> np.ndarray:
        """``log2|Q| + log2|C| + log2 M`` per subcarrier."""
        return logdet_hermitian_stack(self.q) + logdet_hermitian_stack(self.c) + self.m_log


@dataclasses.dataclass
class SolverReport:
    objective_trace: list[float]
    iterations_run: int
    converged: bool
    wall_time: float
    initial_rate: float = float("nan")
    zero_phase_events: int = 0
    repairs: int = 0
    rejected_updates: int = 0
    backend: str = ""

    @property
    def final_rate(self) -> float:
        return self.objective_trace[-1]


def _hermitize(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def column_objective(hhat, f_rf, d, h_em, g, snr, m=None):
    """Evaluate ``M[k]``'s argument for the column ``f`` (a vector)."""
    f = f_rf if f_rf.ndim == 1 else f_rf[:, m]
    quad = np.real(np.einsum("i,kij,j->k", f.conj(), g, f))
    lin = np.real(h_em @ f.conj())
    return d + snr * quad - 2.0 * snr * lin


def build_workspace(hhat: np.ndarray, f_rf: np.ndarray, f_bb: np.ndarray, m: int,
                    snr: float, alpha=None) -> FcWorkspace:
    """Intermediate quantities for column ``m`` with everything else fixed."""
    n_rf = f_rf.shape[1]
    if alpha is None:
        alpha = default_alpha(f_bb)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (f_bb.shape[0],))
    q = f_bb @ np.swapaxes(f_bb, -1, -2).conj() + alpha[:, None, None] * np.eye(n_rf)
    q = _hermitize(q)
    q_inv = inverse_hermitian_stack(q, name="Q[k]")
    rest = [j for j in range(n_rf) if j != m]
    f_rest = f_rf[:, rest]
    h_rest = hhat @ f_rest  # (K, N_t, N_rf-1)
    qi_rr = q_inv[:, rest][:, :, rest]
    qi_rm = q_inv[:, rest, m]  # (K, N_rf-1)
    c = _hermitize(qi_rr + snr * (f_rest.conj().T @ h_rest))
    if rest:
        c_inv = inverse_hermitian_stack(c, name="C[k]")
        ci_q = np.einsum("kij,kj->ki", c_inv, qi_rm)
        h_em = np.einsum("kti,ki->kt", h_rest, ci_q)
        g = hhat - snr * (h_rest @ c_inv @ np.swapaxes(h_rest, -1, -2).conj())
        d = np.real(q_inv[:, m, m] - np.einsum("ki,ki->k", qi_rm.conj(), ci_q))
    else:
        h_em = np.zeros(hhat.shape[:2], dtype=complex)
        g = hhat.copy()
        d = np.real(q_inv[:, m, m]).copy()
    g = _hermitize(g)
    t = column_objective(hhat, f_rf[:, m], d, h_em, g, snr)
    if np.any(t <= 0):
        raise NumericalError("column determinant argument M[k] is not positive")
    return FcWorkspace(m, q, q_inv, c, h_em, g, d, t, hhat)


def optimal_continuous_phase(ws: FcWorkspace, f_col: np.ndarray, n: int, snr: float,
                             extra_starts: int = DEFAULT_EXTRA_STARTS):
    """Best unquantized phase for element ``n`` of column ``ws.m``, others fixed.

    The closed-form estimate is the angle of ``sum_k z_k / M[k]`` with
    ``z_k = G[k]_{n,\\n} f_{\\n} - H_em,n[k]`` and ``M[k]`` held at its current
    value. With ``extra_starts >= 0`` the estimate is refined by a
    safeguarded Newton ascent on the exact single-element objective, and
    the best of ``1 + extra_starts`` starting points is kept;
    ``extra_starts = -1`` returns the closed-form estimate alone.

    Returns ``(phase in [0, 2*pi), zero_argument_flag)``.
    """
    f = np.asarray(f_col, dtype=complex)
    amp = 1.0 / np.sqrt(f.size)
    t = column_objective(ws.hhat, f, ws.d, ws.h_em, ws.g, snr)
    z = ws.g[:, n, :] @ f - ws.g[:, n, n] * f[n] - ws.h_em[:, n]
    c = t - 2.0 * snr * np.real(np.conj(f[n]) * z)
    w = 2.0 * snr * amp * z
    th, flag = kernels.get("python").best_phase(c, w, t, extra_starts)
    return float(np.mod(th, 2 * np.pi)), bool(flag)


def init_fc(config: SystemConfig, codebook: PhaseCodebook, seed: int | None = None) -> np.ndarray:
    """Random codebook phases with modulus ``1/sqrt(N_t)`` everywhere.

    Draws that leave ``F_RF`` without full column rank (possible for small
    arrays and few bits) are redrawn from the same stream.
    """
    rng = make_rng(config.rng_seed if seed is None else seed, STREAM_FC_INIT)
    for _ in range(INIT_REDRAWS):
        idx = rng.integers(0, codebook.size, size=(config.N_t, config.N_rf_t))
        f_rf = unit_entries(codebook.phases[idx], config.N_t)
        w = np.linalg.eigvalsh(f_rf.conj().T @ f_rf)
        if w[0] > RANK_TOL * w[-1]:
            break
    return f_rf


def run_column_sweeps(channel: ChannelRealization, f_rf: np.ndarray, active_rows: list[np.ndarray],
                      structure: Structure, codebook: PhaseCodebook | None,
                      max_iters: int = MAX_ITERS, rel_tol: float = REL_TOL,
                      extra_starts: int = DEFAULT_EXTRA_STARTS, backend: str | None = None,
                      callback=None):
    """Shared alternating loop; ``active_rows[m]`` lists the tunable rows of column m.

    A column update that lowers the rate once ``F_BB`` is refreshed, or that
    leaves ``F_RF`` rank deficient, is rolled back, so the rate never decreases between column steps.
    ``callback(precoder)`` is called with the kept state after every column step.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    cfg = channel.config
    kern = kernels.get(backend)
    levels = codebook.size if codebook is not None else 0
    snr = cfg.snr
    start = time.perf_counter()
    f_rf = np.array(f_rf, dtype=complex)
    hhat = np.ascontiguousarray(channel.gram())
    f_bb = digital_precoder(channel.h, f_rf, cfg.N_s, cfg.P_t)
    rate0, _ = spectral_efficiency(channel, HybridPrecoder(f_rf, f_bb, structure), codebook)
    rate = prev = rate0
    trace: list[float] = []
    converged = False
    zeros = rejected = 0
    it = 0
    for it in range(1, max_iters + 1):
        for m in range(f_rf.shape[1]):
            ws = build_workspace(hhat, f_rf, f_bb, m, snr)
            col = np.ascontiguousarray(f_rf[:, m])
            t = np.ascontiguousarray(ws.t)
            rows = np.ascontiguousarray(active_rows[m], dtype=np.int64)
            zeros += kern.fc_sweep(np.ascontiguousarray(ws.g), np.ascontiguousarray(ws.h_em),
                                   col, t, snr, rows, levels, extra_starts)
            trial = f_rf.copy()
            trial[:, m] = col
            try:
                f_bb_new = digital_precoder(channel.h, trial, cfg.N_s, cfg.P_t)
                new_rate, _ = spectral_efficiency(channel, HybridPrecoder(trial, f_bb_new, structure),
                                                  codebook, check=False)
            except RankDeficientError:
                # with N_s < N_rf the column objective can align two columns
                new_rate = -np.inf
            # the column step ignores how F_RF moves the power normalization, so
            # it can lose rate once F_BB is refreshed; keep the old column then
            if new_rate >= rate:
                f_rf, f_bb, rate = trial, f_bb_new, new_rate
            else:
                rejected += 1
            if callback is not None:
                callback(HybridPrecoder(f_rf.copy(), f_bb.copy(), structure))
        trace.append(rate)
        if abs(rate - prev) <= rel_tol * abs(prev):
            converged = True
            break
        prev = rate
    prec = HybridPrecoder(f_rf, f_bb, structure)
    final, _ = spectral_efficiency(channel, prec, codebook)
    trace[-1] = final
    report = SolverReport(trace, it, converged, time.perf_counter() - start, rate0,
                          zeros, 0, rejected, backend or kernels.BACKEND)
    return prec, report


def solve_fc(channel: ChannelRealization, config: SystemConfig | None = None, *,
             f_rf0: np.ndarray | None = None, quantize: bool = True,
             max_iters: int = MAX_ITERS, rel_tol: float = REL_TOL,
             extra_starts: int = DEFAULT_EXTRA_STARTS, backend: str | None = None,
             callback=None):
    """Fully-connected alternating optimization.

    ``quantize=False`` keeps continuous phases (used as a relaxation bound
    in tests). Returns ``(HybridPrecoder, SolverReport)``.
    """
    cfg = config or channel.config
    if cfg.structure is not Structure.FULLY_CONNECTED:
        raise ValueError("solve_fc needs a FullyConnected config")
    if channel.h.shape != (cfg.K, cfg.N_r, cfg.N_t):
        raise ValueError("channel dimensions do not match the config")
    codebook = PhaseCodebook(cfg.bits)
    f_rf = init_fc(cfg, codebook) if f_rf0 is None else np.asarray(f_rf0, dtype=complex)
    rows = [np.arange(cfg.N_t)] * cfg.N_rf_t
    return run_column_sweeps(channel, f_rf, rows, Structure.FULLY_CONNECTED,
                             codebook if quantize else None, max_iters, rel_tol,
                             extra_starts, backend, callback)
