"""System configuration and seeded random streams."""
from __future__ import annotations

import dataclasses
import enum
from pathlib import Path

import numpy as np


class Structure(str, enum.Enum):
    FULLY_CONNECTED = "FullyConnected"
    PARTIALLY_CONNECTED = "PartiallyConnected"
    DYNAMIC_SUBARRAY = "DynamicSubarray"


class ConfigError(ValueError):
    pass


# independent random streams derived from one user seed
STREAM_CHANNEL = 0
STREAM_FC_INIT = 1
STREAM_DS_INIT = 2
STREAM_PC_FALLBACK = 3


def make_rng(seed: int, stream: int = STREAM_CHANNEL) -> np.random.Generator:
    """Counter-based Philox generator keyed on ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    """Scalar system parameters. Frequencies in Hz, powers linear."""

    f_c: float = 300e9
    B: float = 30e9
    K: int = 8
    N_t: int = 16
    N_r: int = 8
    N_rf_t: int = 4
    N_rf_r: int = 4
    N_s: int = 2
    P_t: float = 10.0
    sigma2_n: float = 1.0
    bits: int = 3
    structure: Structure = Structure.FULLY_CONNECTED
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "structure", Structure(self.structure))
        self.validate()

    def validate(self) -> None:
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.bits < 1:
            raise ConfigError("bits must be >= 1")
        if self.f_c <= 0 or self.B <= 0 or not self.B < 2 * self.f_c:
            raise ConfigError("need f_c > 0 and 0 < B < 2 f_c")
        if min(self.N_t, self.N_r, self.N_rf_t, self.N_rf_r, self.N_s) < 1:
            raise ConfigError("array sizes, RF chains and streams must be >= 1")
        if self.N_rf_t > self.N_t or self.N_rf_r > self.N_r:
            raise ConfigError("more RF chains than antennas")
        if self.N_s > min(self.N_rf_t, self.N_rf_r):
            raise ConfigError(f"N_s={self.N_s} exceeds min(N_rf_t, N_rf_r)")
        if self.P_t <= 0 or self.sigma2_n <= 0:
            raise ConfigError("P_t and sigma2_n must be positive")
        if self.structure is Structure.PARTIALLY_CONNECTED and self.N_t % self.N_rf_t:
            raise ConfigError(f"N_rf_t={self.N_rf_t} does not divide N_t={self.N_t}")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")

    @property
    def snr(self) -> float:
        return self.P_t / self.sigma2_n

    @property
    def snr_db(self) -> float:
        return 10.0 * np.log10(self.snr)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        return self.replace(P_t=10.0 ** (snr_db / 10.0), sigma2_n=1.0)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["structure"] = self.structure.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(fields) - {"snr_db"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, value in d.items():
            if name == "snr_db":
                continue
            kw[name] = _coerce(fields[name], value)
        cfg = cls(**kw)
        if "snr_db" in d:
            cfg = cfg.with_snr_db(float(d["snr_db"]))
        return cfg


def _coerce(field: dataclasses.Field, value):
    if field.name == "structure":
        return Structure(value)
    default = field.default
    if isinstance(default, int) and not isinstance(default, bool):
        return int(float(value)) if isinstance(value, str) else int(value)
    if isinstance(default, float):
        return float(value)
    return value


def load_config(path) -> SystemConfig:
    """Read a ``key = value`` file whose keys are SystemConfig field names.

    Blank lines and ``#`` comments are ignored. ``snr_db`` is accepted as a
    shorthand that sets ``P_t = 10**(snr_db/10)`` with ``sigma2_n = 1``.
    """
    d = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        d[key] = value
    return SystemConfig.from_dict(d)
