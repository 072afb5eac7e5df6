"""Reference schemes: fully-digital precoding, direct phase quantization of
the SVD precoder, and the narrowband iterative analog precoder used for the
beam-squint demonstration.
"""
from __future__ import annotations

import dataclasses
import enum

import numpy as np

from .channel import ChannelRealization, array_response, normalized_angle
from .config import STREAM_FC_INIT, Structure, SystemConfig, make_rng
from .evalcore import (HybridPrecoder, PhaseCodebook, digital_precoder, fsum_mean,
                       rate_per_subcarrier, spectral_efficiency, unit_entries)
from .numerics import inverse_hermitian, logdet_hermitian, right_singular_stack


class BaselineKind(str, enum.Enum):
    FULLY_DIGITAL = "FullyDigital"
    DIRECT_QUANT_SVD = "DirectQuantSVD"
    NARROWBAND_ITERATIVE = "NarrowbandIterative"


@dataclasses.dataclass
class FullyDigitalResult:
    precoders: np.ndarray  # (K, N_t, N_s)
    rate: float
    per_subcarrier: np.ndarray


def fully_digital(channel: ChannelRealization, config: SystemConfig | None = None) -> FullyDigitalResult:
    """Top-``N_s`` right singular vectors per subcarrier, power ``N_s * P_t`` each.

    Equal power per stream; this upper-bounds every hybrid scheme with the
    same power normalization.
    """
    cfg = config or channel.config
    v = right_singular_stack(channel.h, cfg.N_s)
    w = np.sqrt(cfg.P_t) * v
    per_k = rate_per_subcarrier(channel.h, w, cfg.snr)
    return FullyDigitalResult(w, fsum_mean(per_k), per_k)


def direct_quant_svd(channel: ChannelRealization, config: SystemConfig | None = None, *,
                     quantize: bool = True):
    """Phase-quantize the leading right singular vectors of the averaged channel.

    ``quantize=False`` keeps the continuous phases (constant-modulus
    projection only). Returns ``(HybridPrecoder, rate)``.
    """
    cfg = config or channel.config
    codebook = PhaseCodebook(cfg.bits)
    v = right_singular_stack(channel.average(), cfg.N_rf_t)
    phases = np.angle(v)
    if quantize:
        phases = codebook.quantize(phases)
    f_rf = unit_entries(phases, cfg.N_t)
    f_bb = digital_precoder(channel.h, f_rf, cfg.N_s, cfg.P_t)
    prec = HybridPrecoder(f_rf, f_bb, Structure.FULLY_CONNECTED)
    rate, _ = spectral_efficiency(channel, prec, codebook if quantize else None)
    return prec, rate


def narrowband_objective(hhat: np.ndarray, f_rf: np.ndarray, snr: float) -> float:
    """``log2|I + snr F^H Hhat F|`` for a single-carrier Gram matrix."""
    x = np.eye(f_rf.shape[1]) + snr * (f_rf.conj().T @ hhat @ f_rf)
    return logdet_hermitian(0.5 * (x + x.conj().T))


def narrowband_iterative(h_fc: np.ndarray, config: SystemConfig, *, f_rf0: np.ndarray | None = None,
                         quantize: bool = False, max_iters: int = 100, tol: float = 1e-9,
                         seed: int | None = None):
    """Element-wise unit-modulus analog precoder for a single-carrier channel.

    Each column ``i`` sees ``G_i = snr Hhat - snr^2 Hhat F_\\i C_i^{-1} F_\\i^H Hhat``
    with ``C_i = I + snr F_\\i^H Hhat F_\\i``; element ``j`` is set to the phase
    of ``eta_ji = sum_{l != j} G_i[j, l] F[l, i]`` (phase 0 when ``eta_ji = 0``).
    Entries have modulus ``1/sqrt(N_t)``. With ``quantize`` the converged
    phases are snapped to the codebook afterwards.

    Returns ``(f_rf, objective_trace)``, the trace holding
    ``log2|I + snr F^H Hhat F|`` before quantization after every pass.
    """
    h_fc = np.asarray(h_fc, dtype=complex)
    n_t = h_fc.shape[1]
    n_rf = config.N_rf_t
    snr = config.snr
    amp = 1.0 / np.sqrt(n_t)
    codebook = PhaseCodebook(config.bits)
    if f_rf0 is None:
        rng = make_rng(config.rng_seed if seed is None else seed, STREAM_FC_INIT)
        f_rf = unit_entries(rng.uniform(0.0, 2 * np.pi, size=(n_t, n_rf)), n_t)
    else:
        f_rf = np.array(f_rf0, dtype=complex)
    hhat = h_fc.conj().T @ h_fc
    trace = [narrowband_objective(hhat, f_rf, snr)]
    for _ in range(max_iters):
        for i in range(n_rf):
            rest = np.delete(f_rf, i, axis=1)
            if rest.shape[1]:
                c = np.eye(rest.shape[1]) + snr * (rest.conj().T @ hhat @ rest)
                c_inv = inverse_hermitian(0.5 * (c + c.conj().T), name="C_i")
                hr = hhat @ rest
                g = snr * hhat - snr ** 2 * (hr @ c_inv @ hr.conj().T)
            else:
                g = snr * hhat
            for j in range(n_t):
                eta = g[j] @ f_rf[:, i] - g[j, j] * f_rf[j, i]
                f_rf[j, i] = amp if eta == 0 else amp * eta / abs(eta)
        trace.append(narrowband_objective(hhat, f_rf, snr))
        if abs(trace[-1] - trace[-2]) <= tol * max(1.0, abs(trace[-1])):
            break
    if quantize:
        f_rf = unit_entries(codebook.quantize(np.angle(f_rf)), n_t)
    return f_rf, trace


def single_path_channel(config: SystemConfig, theta_rad: float) -> np.ndarray:
    """Line-of-sight channel at the center frequency, ``sqrt(N_t N_r) a_r a_t^H``."""
    phi = normalized_angle(theta_rad, config.f_c, config.f_c)
    a_t = array_response(config.N_t, phi)
    a_r = array_response(config.N_r, phi)
    return np.sqrt(config.N_t * config.N_r) * np.outer(a_r, a_t.conj())


def squint_beam(config: SystemConfig, theta_rad: float = np.pi / 4) -> np.ndarray:
    """Quantized narrowband beam aimed at ``theta_rad`` at the center frequency."""
    cfg = config.replace(N_rf_t=1, N_s=1, structure=Structure.FULLY_CONNECTED)
    f_rf, _ = narrowband_iterative(single_path_channel(cfg, theta_rad), cfg, quantize=True)
    return f_rf[:, 0]
