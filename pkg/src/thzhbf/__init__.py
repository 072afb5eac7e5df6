"""Wideband THz hybrid precoding with low-resolution phase shifters."""
__version__ = "0.1.0"

from .config import Structure, SystemConfig, load_config
from .channel import ChannelRealization, generate_channel
from .evalcore import HybridPrecoder, PhaseCodebook, spectral_efficiency, update_digital
from .solver_fc import SolverReport, solve_fc
from .solver_pc import solve_pc
from .solver_ds import solve_ds
from .baselines import direct_quant_svd, fully_digital, narrowband_iterative

__all__ = [
    "Structure", "SystemConfig", "load_config", "ChannelRealization", "generate_channel",
    "HybridPrecoder", "PhaseCodebook", "spectral_efficiency", "update_digital",
    "SolverReport", "solve_fc", "solve_pc", "solve_ds",
    "direct_quant_svd", "fully_digital", "narrowband_iterative",
]
