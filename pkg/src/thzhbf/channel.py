"""Clustered wideband THz channel with beam squint.

Antenna spacing is half a wavelength at the carrier, so the normalized
angle seen by subcarrier ``k`` scales with ``f_k / f_c``. That scaling is
what makes a frequency-flat analog beam point in different directions
across the band.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .config import STREAM_CHANNEL, SystemConfig, make_rng

ANGLE_LIMIT = np.pi / 3
ANGLE_SPREAD = np.deg2rad(10.0)
MAX_DELAY = 1e-9
CHANNEL_FORMAT = "thzhbf-channel"
CHANNEL_FORMAT_VERSION = 1


def subcarrier_frequency(config: SystemConfig, k: int) -> float:
    """Center frequency of subcarrier ``k`` (1-based)."""
    if not 1 <= k <= config.K:
        raise IndexError(f"subcarrier index {k} outside 1..{config.K}")
    return config.f_c - config.B / 2 + (config.B / config.K) * (k - 0.5)


def subcarrier_frequencies(config: SystemConfig) -> np.ndarray:
    k = np.arange(1, config.K + 1)
    return config.f_c - config.B / 2 + (config.B / config.K) * (k - 0.5)


def normalized_angle(actual_angle, f_k, f_c):
    """``(f_k / f_c) * sin(angle)``; broadcasts over arrays."""
    return np.asarray(f_k) / f_c * np.sin(actual_angle)


def array_response(n: int, normalized) -> np.ndarray:
    """ULA steering vector(s) with unit norm.

    ``normalized`` may be an array; the antenna axis is appended last.
    """
    idx = np.arange(n)
    return np.exp(1j * np.pi * np.multiply.outer(normalized, idx)) / np.sqrt(n)


def array_response_tx(n_t: int, normalized_angle: float) -> np.ndarray:
    if n_t < 1:
        raise ValueError("need at least one antenna")
    return array_response(n_t, float(normalized_angle))


@dataclasses.dataclass(frozen=True)
class PathSet:
    """Per-ray parameters of one channel draw.

    ``cluster[l]`` is the cluster index of ray ``l``; ``gain`` has shape
    ``(rays, K)`` because the path gain differs per subcarrier.
    """

    cluster: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    delay: np.ndarray
    gain: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(np.unique(self.cluster).size)

    @property
    def n_rays(self) -> int:
        return int(self.aod.size)

    @property
    def rays_per_cluster(self) -> list[int]:
        _, counts = np.unique(self.cluster, return_counts=True)
        return counts.tolist()


@dataclasses.dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray  # (K, N_r, N_t)
    paths: PathSet | None
    config: SystemConfig

    @property
    def K(self) -> int:
        return self.h.shape[0]

    def at(self, k: int) -> np.ndarray:
        """Channel matrix of subcarrier ``k`` (1-based)."""
        return self.h[k - 1]

    def gram(self) -> np.ndarray:
        """``H[k]^H H[k]`` for all k, shape (K, N_t, N_t)."""
        return np.swapaxes(self.h, -1, -2).conj() @ self.h

    def average(self) -> np.ndarray:
        return self.h.mean(axis=0)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def assemble(config: SystemConfig, paths: PathSet) -> np.ndarray:
    """Sum the rays into per-subcarrier channel matrices."""
    fk = subcarrier_frequencies(config)
    n_rays = paths.n_rays
    gamma = np.sqrt(config.N_t * config.N_r / n_rays)
    a_r = array_response(config.N_r, normalized_angle(paths.aoa[:, None], fk[None, :], config.f_c))
    a_t = array_response(config.N_t, normalized_angle(paths.aod[:, None], fk[None, :], config.f_c))
    beta = np.exp(-2j * np.pi * paths.delay[:, None] * fk[None, :])
    coef = gamma * paths.gain * beta  # (rays, K)
    # H[k] = sum_l coef[l,k] a_r[l,k] a_t[l,k]^H
    return np.einsum("lk,lkr,lkt->krt", coef, a_r, a_t.conj())


def channel_from_paths(config: SystemConfig, paths: PathSet) -> ChannelRealization:
    paths = PathSet(*(_freeze(np.asarray(getattr(paths, f.name)))
                      for f in dataclasses.fields(PathSet)))
    return ChannelRealization(_freeze(assemble(config, paths)), paths, config)


def draw_paths(config: SystemConfig, rng: np.random.Generator) -> PathSet:
    n_cl = int(rng.integers(1, 4))
    rays = rng.integers(3, 6, size=n_cl)
    cluster = np.repeat(np.arange(n_cl), rays)
    n = cluster.size
    mean_aod = rng.uniform(-ANGLE_LIMIT, ANGLE_LIMIT, size=n_cl)
    mean_aoa = rng.uniform(-ANGLE_LIMIT, ANGLE_LIMIT, size=n_cl)
    scale = ANGLE_SPREAD / np.sqrt(2.0)
    aod = np.clip(mean_aod[cluster] + rng.laplace(0.0, scale, size=n), -ANGLE_LIMIT, ANGLE_LIMIT)
    aoa = np.clip(mean_aoa[cluster] + rng.laplace(0.0, scale, size=n), -ANGLE_LIMIT, ANGLE_LIMIT)
    delay = rng.uniform(0.0, MAX_DELAY, size=n)
    gain = (rng.standard_normal((n, config.K)) + 1j * rng.standard_normal((n, config.K))) / np.sqrt(2.0)
    return PathSet(cluster, aod, aoa, delay, gain)


def generate_channel(config: SystemConfig, seed: int | None = None) -> ChannelRealization:
    """Draw one channel realization; deterministic in ``config.rng_seed``."""
    seed = config.rng_seed if seed is None else seed
    rng = make_rng(seed, STREAM_CHANNEL)
    return channel_from_paths(config, draw_paths(config, rng))


def array_gain_map(config: SystemConfig, f_rf: np.ndarray, angles) -> np.ndarray:
    """Normalized array gain of a frequency-flat beam, ``(len(angles), K)``.

    Entry ``(i, k)`` is ``|a_t(phi)^H f| / ||f||`` with ``phi`` the
    normalized angle of ``angles[i]`` at subcarrier ``k``; a beam matched
    to its own direction and frequency scores exactly 1.
    """
    f = np.asarray(f_rf, dtype=complex).reshape(-1)
    if f.size != config.N_t:
        raise ValueError("f_rf length must equal N_t")
    fk = subcarrier_frequencies(config)
    phi = normalized_angle(np.asarray(angles, dtype=float)[:, None], fk[None, :], config.f_c)
    a = array_response(config.N_t, phi)  # (angles, K, N_t)
    return np.abs(a.conj() @ f) / np.linalg.norm(f)


# ---------------------------------------------------------------- file I/O

def _cplx_to_json(a: np.ndarray) -> dict:
    return {"real": np.real(a).tolist(), "imag": np.imag(a).tolist()}


def _cplx_from_json(d: dict) -> np.ndarray:
    return np.asarray(d["real"], dtype=float) + 1j * np.asarray(d["imag"], dtype=float)


def channel_to_dict(ch: ChannelRealization) -> dict:
    out = {
        "format": CHANNEL_FORMAT,
        "version": CHANNEL_FORMAT_VERSION,
        "config": ch.config.to_dict(),
        "seed": ch.config.rng_seed,
        "shape": list(ch.h.shape),
        "subcarrier_frequencies_hz": subcarrier_frequencies(ch.config).tolist(),
        "H": _cplx_to_json(ch.h),
        "paths": None,
    }
    if ch.paths is not None:
        p = ch.paths
        out["paths"] = {
            "cluster": p.cluster.tolist(),
            "aod_rad": p.aod.tolist(),
            "aoa_rad": p.aoa.tolist(),
            "delay_s": p.delay.tolist(),
            "gain": _cplx_to_json(p.gain),
        }
    return out


def channel_from_dict(d: dict) -> ChannelRealization:
    if d.get("format") != CHANNEL_FORMAT:
        raise ValueError("not a channel file")
    if d.get("version") != CHANNEL_FORMAT_VERSION:
        raise ValueError(f"unsupported channel file version {d.get('version')}")
    config = SystemConfig.from_dict(d["config"])
    h = _cplx_from_json(d["H"]).reshape(d["shape"])
    paths = None
    if d.get("paths") is not None:
        p = d["paths"]
        paths = PathSet(np.asarray(p["cluster"], dtype=int), np.asarray(p["aod_rad"], dtype=float),
                        np.asarray(p["aoa_rad"], dtype=float), np.asarray(p["delay_s"], dtype=float),
                        _cplx_from_json(p["gain"]).reshape(len(p["cluster"]), -1))
        paths = PathSet(*(_freeze(getattr(paths, f.name)) for f in dataclasses.fields(PathSet)))
    return ChannelRealization(_freeze(h), paths, config)


def save_channel(ch: ChannelRealization, path) -> None:
    Path(path).write_text(json.dumps(channel_to_dict(ch)))


def load_channel(path) -> ChannelRealization:
    return channel_from_dict(json.loads(Path(path).read_text()))
