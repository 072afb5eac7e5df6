"""Alternating hybrid precoding for the fixed partially-connected structure.

RF chain ``i`` drives the contiguous antenna block ``i``. The column update
is the fully-connected one restricted to that block, so the zero pattern is
never touched.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .channel import ChannelRealization
from .config import STREAM_PC_FALLBACK, Structure, SystemConfig, make_rng
from .constants import MAX_ITERS, REL_TOL
from .evalcore import PhaseCodebook, unit_entries
from .numerics import svd
from .solver_fc import DEFAULT_EXTRA_STARTS, run_column_sweeps


@dataclasses.dataclass(frozen=True)
class SubarrayLayout:
    n_t: int
    n_rf: int

    def __post_init__(self):
        if self.n_rf < 1 or self.n_t % self.n_rf:
            raise ValueError(f"N_rf={self.n_rf} must divide N_t={self.n_t}")

    @property
    def block_size(self) -> int:
        return self.n_t // self.n_rf

    def rows(self, i: int) -> np.ndarray:
        """0-based antenna indices driven by RF chain ``i`` (0-based)."""
        return np.arange(i * self.block_size, (i + 1) * self.block_size)

    def row_range(self, i: int) -> tuple[int, int]:
        """1-based inclusive range for RF chain ``i`` (1-based)."""
        return ((i - 1) * self.block_size + 1, i * self.block_size)


def init_pc(channel: ChannelRealization, config: SystemConfig | None = None,
            codebook: PhaseCodebook | None = None) -> np.ndarray:
    """Block-diagonal start from the leading right-singular vector of each
    block of the subcarrier-averaged channel, phase-quantized at once.

    A block whose averaged channel is all zero gets random codebook phases.
    """
    cfg = config or channel.config
    codebook = codebook or PhaseCodebook(cfg.bits)
    layout = SubarrayLayout(cfg.N_t, cfg.N_rf_t)
    h_avg = channel.average()
    f_rf = np.zeros((cfg.N_t, cfg.N_rf_t), dtype=complex)
    rng = None
    for i in range(cfg.N_rf_t):
        rows = layout.rows(i)
        block = h_avg[:, rows]
        if not np.any(block):
            rng = rng or make_rng(cfg.rng_seed, STREAM_PC_FALLBACK)
            phases = codebook.phases[rng.integers(0, codebook.size, size=rows.size)]
        else:
            _, _, v = svd(block)
            v1 = v[:, 0]
            # fix the arbitrary common phase so the result is reproducible
            v1 = v1 * np.exp(-1j * np.angle(v1[np.argmax(np.abs(v1) > 0)]))
            phases = codebook.quantize(np.angle(v1))
        f_rf[rows, i] = unit_entries(phases, cfg.N_t)
    return f_rf


def solve_pc(channel: ChannelRealization, config: SystemConfig | None = None, *,
             f_rf0: np.ndarray | None = None, max_iters: int = MAX_ITERS,
             rel_tol: float = REL_TOL, extra_starts: int = DEFAULT_EXTRA_STARTS,
             backend: str | None = None, callback=None):
    """Partially-connected alternating optimization.

    Returns ``(HybridPrecoder, SolverReport)``.
    """
    cfg = config or channel.config
    if cfg.structure is not Structure.PARTIALLY_CONNECTED:
        raise ValueError("solve_pc needs a PartiallyConnected config")
    if channel.h.shape != (cfg.K, cfg.N_r, cfg.N_t):
        raise ValueError("channel dimensions do not match the config")
    codebook = PhaseCodebook(cfg.bits)
    layout = SubarrayLayout(cfg.N_t, cfg.N_rf_t)
    f_rf = init_pc(channel, cfg, codebook) if f_rf0 is None else np.asarray(f_rf0, dtype=complex)
    rows = [layout.rows(i) for i in range(cfg.N_rf_t)]
    return run_column_sweeps(channel, f_rf, rows, Structure.PARTIALLY_CONNECTED, codebook,
                             max_iters, rel_tol, extra_starts, backend, callback)
