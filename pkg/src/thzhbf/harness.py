"""Seeded experiment sweeps, gain-map emission and complexity benchmarks.

Result tables are CSV and run metadata is JSON. Rows are sorted by
(sweep value, scheme, seed) before writing, so the number of workers never
changes the output bytes. Wall-clock times go to a separate timing file for
the same reason.
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import dataclasses
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import direct_quant_svd, fully_digital, squint_beam
from .channel import array_gain_map, generate_channel, subcarrier_frequencies
from .config import Structure, SystemConfig
from .evalcore import HybridPrecoder, PhaseCodebook, fsum_mean, rate_per_subcarrier, spectral_efficiency
from .solver_ds import solve_ds
from .solver_fc import solve_fc
from .solver_pc import solve_pc

AXES = ("snr_db", "bandwidth", "n_t", "bits")
SCHEMES = ("AlterOptFC", "AlterOptPC", "DSWB", "FullyDigital", "DirectQuantSVD")
SCHEME_STRUCTURE = {
    "AlterOptFC": Structure.FULLY_CONNECTED,
    "AlterOptPC": Structure.PARTIALLY_CONNECTED,
    "DSWB": Structure.DYNAMIC_SUBARRAY,
    "FullyDigital": Structure.FULLY_CONNECTED,
    "DirectQuantSVD": Structure.FULLY_CONNECTED,
}
CSV_FIELDS = ("sweep_value", "scheme", "seed", "avg_rate", "iterations", "converged", "error")
SPOT_CHECKS = 5
SPOT_TOL = 1e-9


class ExperimentError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentSpec:
    base: SystemConfig
    sweep_axis: str
    sweep_values: list
    schemes: list[str] = dataclasses.field(default_factory=lambda: list(SCHEMES))
    trials: int = 1
    output_path: str | Path = "results.csv"
    workers: int = 1

    def __post_init__(self):
        if self.sweep_axis not in AXES:
            raise ExperimentError(f"unknown sweep axis {self.sweep_axis!r}; choose from {AXES}")
        vals = list(self.sweep_values)
        if not vals:
            raise ExperimentError("sweep_values must not be empty")
        if vals != sorted(vals):
            raise ExperimentError("sweep_values must be sorted")
        self.sweep_values = vals
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ExperimentError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        if self.workers < 1:
            raise ExperimentError("workers must be >= 1")

    def seeds(self) -> list[int]:
        return [self.base.rng_seed + j for j in range(self.trials)]


@dataclasses.dataclass
class ResultRow:
    scheme: str
    sweep_value: float
    seed: int
    avg_rate: float
    iterations: int
    wall_time: float
    converged: bool
    error: str = ""

    def csv_record(self) -> dict:
        return {
            "sweep_value": repr(self.sweep_value),
            "scheme": self.scheme,
            "seed": self.seed,
            "avg_rate": repr(self.avg_rate),
            "iterations": self.iterations,
            "converged": int(self.converged),
            "error": self.error,
        }


@dataclasses.dataclass
class ExperimentResult:
    rows: list[ResultRow]
    aggregates: list[dict]
    spot_checks: list[dict]
    paths: dict


def apply_axis(base: SystemConfig, axis: str, value) -> SystemConfig:
    if axis == "snr_db":
        return base.with_snr_db(float(value))
    if axis == "bandwidth":
        return base.replace(B=float(value))
    if axis == "n_t":
        return base.replace(N_t=int(value))
    if axis == "bits":
        return base.replace(bits=int(value))
    raise ExperimentError(f"unknown sweep axis {axis!r}")


def run_scheme(scheme: str, cfg: SystemConfig):
    """Run one scheme on the channel drawn from ``cfg``.

    Returns ``(rate, iterations, converged, precoder)``; the precoder is a
    HybridPrecoder, or the (K, N_t, N_s) array for the fully-digital scheme.
    """
    cfg = cfg.replace(structure=SCHEME_STRUCTURE[scheme])
    cfg.validate()
    channel = generate_channel(cfg)
    if scheme == "FullyDigital":
        fd = fully_digital(channel)
        return fd.rate, 0, True, fd.precoders
    if scheme == "DirectQuantSVD":
        prec, rate = direct_quant_svd(channel)
        return rate, 0, True, prec
    solver = {"AlterOptFC": solve_fc, "AlterOptPC": solve_pc, "DSWB": solve_ds}[scheme]
    prec, report = solver(channel)
    return report.final_rate, report.iterations_run, report.converged, prec


def _run_cell(args):
    """All schemes for one (sweep value, seed); runs inside a worker."""
    axis, value, seed, base, schemes = args
    cfg = apply_axis(base, axis, value).replace(rng_seed=seed)
    out = []
    for scheme in schemes:
        start = time.perf_counter()
        try:
            rate, iters, conv, prec = run_scheme(scheme, cfg)
            err = ""
        except Exception as exc:  # recorded per row; the sweep continues
            rate, iters, conv, prec = float("nan"), 0, False, None
            err = f"{type(exc).__name__}: {exc}"
        row = ResultRow(scheme, value, seed, rate, iters, time.perf_counter() - start, conv, err)
        out.append((row, prec))
    return out


def recompute_rate(scheme: str, cfg: SystemConfig, precoder) -> float:
    """Rate of a stored precoder on the regenerated channel."""
    cfg = cfg.replace(structure=SCHEME_STRUCTURE[scheme])
    channel = generate_channel(cfg)
    if isinstance(precoder, HybridPrecoder):
        return spectral_efficiency(channel, precoder, PhaseCodebook(cfg.bits))[0]
    return fsum_mean(rate_per_subcarrier(channel.h, precoder, cfg.snr))


def _sort_key(row: ResultRow):
    return (row.sweep_value, SCHEMES.index(row.scheme), row.seed)


def aggregate(rows: list[ResultRow]) -> list[dict]:
    """Mean, standard error and error count per (sweep value, scheme)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.sweep_value, r.scheme), []).append(r)
    out = []
    for (value, scheme), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], SCHEMES.index(kv[0][1]))):
        ok = [r.avg_rate for r in grp if not r.error]
        n = len(ok)
        mean = fsum_mean(ok) if n else float("nan")
        sem = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append({"sweep_value": value, "scheme": scheme, "trials": len(grp), "ok": n,
                    "mean_rate": mean, "std_error": sem})
    return out


def _companion(path: Path, suffix: str, ext: str) -> Path:
    return path.with_name(f"{path.stem}{suffix}{ext}")


def write_rows(path: Path, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow(r.csv_record())


def run_experiment(spec: ExperimentSpec, *, spot_seed: int = 0) -> ExperimentResult:
    """Run every (sweep value, seed, scheme) and write the result files.

    Files: ``<out>`` raw rows, ``<out>_summary.csv`` means per cell,
    ``<out>_timing.csv`` wall times, and ``<out stem>.json`` metadata.
    A few rows are re-evaluated from their stored precoders; a mismatch
    above 1e-9 raises ExperimentError after the files are written.
    """
    cells = [(spec.sweep_axis, v, s, spec.base, list(spec.schemes))
             for v in spec.sweep_values for s in spec.seeds()]
    if spec.workers > 1:
        with cf.ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    pairs = sorted((p for cell in results for p in cell), key=lambda p: _sort_key(p[0]))
    rows = [p[0] for p in pairs]

    # spot-check stored precoders against a fresh evaluation
    rng = np.random.default_rng(spot_seed)
    good = [i for i, (r, prec) in enumerate(pairs) if not r.error and prec is not None]
    picks = sorted(rng.choice(good, size=min(SPOT_CHECKS, len(good)), replace=False).tolist()) if good else []
    checks = []
    for i in picks:
        row, prec = pairs[i]
        cfg = apply_axis(spec.base, spec.sweep_axis, row.sweep_value).replace(rng_seed=row.seed)
        again = recompute_rate(row.scheme, cfg, prec)
        checks.append({"scheme": row.scheme, "sweep_value": row.sweep_value, "seed": row.seed,
                       "stored": row.avg_rate, "recomputed": again,
                       "ok": abs(again - row.avg_rate) <= SPOT_TOL})

    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out, rows)
    aggs = aggregate(rows)
    summary = _companion(out, "_summary", ".csv")
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["sweep_value", "scheme", "trials", "ok", "mean_rate", "std_error"],
                           lineterminator="\r\n")
        w.writeheader()
        for a in aggs:
            w.writerow({**a, "sweep_value": repr(a["sweep_value"]), "mean_rate": repr(a["mean_rate"]),
                        "std_error": repr(a["std_error"])})
    timing = _companion(out, "_timing", ".csv")
    with open(timing, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["sweep_value", "scheme", "seed", "wall_time_s"])
        for r in rows:
            w.writerow([repr(r.sweep_value), r.scheme, r.seed, f"{r.wall_time:.6f}"])
    meta = _companion(out, "", ".json")
    meta.write_text(json.dumps({
        "version": f"thzhbf {__version__}",
        "config": spec.base.to_dict(),
        "sweep_axis": spec.sweep_axis,
        "sweep_values": spec.sweep_values,
        "schemes": list(spec.schemes),
        "seeds": spec.seeds(),
        "spot_checks": checks,
        "files": {"rows": out.name, "summary": summary.name, "timing": timing.name},
    }, indent=2, sort_keys=True) + "\n")
    paths = {"rows": out, "summary": summary, "timing": timing, "metadata": meta}
    failed = [c for c in checks if not c["ok"]]
    if failed:
        raise ExperimentError(f"stored rate does not match recomputation: {failed[0]}")
    return ExperimentResult(rows, aggs, checks, paths)


# ------------------------------------------------------------------ gain map

GAIN_MAP_FIELDS = ("angle_deg", "subcarrier_index", "frequency_hz", "gain")
FIG2_CONFIG = SystemConfig(N_t=128, K=128, N_rf_t=1, N_s=1, bits=3, f_c=300e9, B=30e9)


def gain_map_rows(config: SystemConfig, angles_deg, theta_u_deg: float = 45.0):
    """``(angle_deg, subcarrier_index, frequency_hz, gain)`` for the squint demo beam."""
    angles_deg = np.asarray(angles_deg, dtype=float)
    f = squint_beam(config, math.radians(theta_u_deg))
    gain = array_gain_map(config, f, np.deg2rad(angles_deg))
    freqs = subcarrier_frequencies(config)
    for i, a in enumerate(angles_deg):
        for k in range(config.K):
            yield a, k + 1, freqs[k], gain[i, k]


def emit_gain_map(config: SystemConfig, angles_deg, path, theta_u_deg: float = 45.0) -> int:
    """Write the angle/subcarrier gain table; returns the number of data rows."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(GAIN_MAP_FIELDS)
        for a, k, fk, g in gain_map_rows(config, angles_deg, theta_u_deg):
            w.writerow([repr(float(a)), k, repr(float(fk)), repr(float(g))])
            n += 1
    return n


def squint_summary(config: SystemConfig, theta_u_deg: float = 45.0, angles_deg=None) -> dict:
    """Edge/center gain ratio at the target angle and the peak angle per subcarrier."""
    if angles_deg is None:
        angles_deg = np.linspace(-90.0, 90.0, 1801)
    angles_deg = np.asarray(angles_deg, dtype=float)
    f = squint_beam(config, math.radians(theta_u_deg))
    at_target = array_gain_map(config, f, [math.radians(theta_u_deg)])[0]
    gain = array_gain_map(config, f, np.deg2rad(angles_deg))
    peaks = angles_deg[np.argmax(gain, axis=0)]
    center = at_target[(config.K - 1) // 2: config.K // 2 + 1].mean()
    steps = np.diff(peaks)
    return {
        "center_gain": float(center),
        "edge_gains": (float(at_target[0]), float(at_target[-1])),
        "edge_ratio": float(max(at_target[0], at_target[-1]) / center),
        "peak_angles_deg": peaks,
        "peaks_monotone": bool(np.all(steps <= 0) or np.all(steps >= 0)),
    }


# ------------------------------------------------------------------ scaling

@dataclasses.dataclass
class ScalingReport:
    n_t_values: list[int]
    times: dict  # scheme -> seconds per outer iteration, one per N_t
    slopes: dict  # scheme -> fitted log-log slope
    predicted_exponent: float
    bits_values: list[int]
    ds_bits_times: list[float]
    ds_linear_r2: float
    ds_linear_slope: float

    def checks(self) -> dict:
        fc = self.slopes.get("AlterOptFC", float("nan"))
        pc = self.slopes.get("AlterOptPC", float("nan"))
        return {
            "fc_slope_in_range": 1.6 <= fc <= 2.6,
            "pc_slope_not_above_fc": pc <= fc + 0.3,
            "ds_linear_in_levels": self.ds_linear_r2 >= 0.95 and self.ds_linear_slope > 0,
        }


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def linear_fit(x, y):
    """Least-squares line ``y = a x + c``; returns ``(a, c, r2)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    a, c = np.polyfit(x, y, 1)
    resid = y - (a * x + c)
    ss = np.sum((y - y.mean()) ** 2)
    return float(a), float(c), float(1 - np.sum(resid ** 2) / ss) if ss > 0 else 1.0


SOLVERS = {"AlterOptFC": solve_fc, "AlterOptPC": solve_pc, "DSWB": solve_ds}


def time_points(points, repeats: int = 3, seeds: int = 3) -> list[float]:
    """Seconds per outer iteration for each ``(scheme, cfg)`` point.

    Repeats are interleaved across all points, so drift in machine load hits
    every point alike; each (point, channel) keeps its fastest run and the
    result is the mean over ``seeds`` channels.
    """
    jobs = []
    for scheme, cfg in points:
        cfg = cfg.replace(structure=SCHEME_STRUCTURE[scheme])
        chans = [generate_channel(cfg.replace(rng_seed=cfg.rng_seed + j)) for j in range(seeds)]
        jobs.append((SOLVERS[scheme], chans))
    best = np.full((len(jobs), seeds), np.inf)
    for _ in range(repeats):
        for p, (solver, chans) in enumerate(jobs):
            for j, channel in enumerate(chans):
                # rel_tol < 0 never triggers, so runs do a fixed amount of work
                _, report = solver(channel, max_iters=2, rel_tol=-1.0)
                best[p, j] = min(best[p, j], report.wall_time / report.iterations_run)
    return best.mean(axis=1).tolist()


def time_per_iteration(scheme: str, cfg: SystemConfig, repeats: int = 3, seeds: int = 3) -> float:
    """Seconds per outer iteration: best of ``repeats`` per channel, mean over ``seeds``."""
    return time_points([(scheme, cfg)], repeats, seeds)[0]


def benchmark_scaling(base: SystemConfig, n_t_values=(16, 32, 64), bits_values=(1, 2, 3, 4),
                      schemes=("AlterOptFC", "AlterOptPC", "DSWB"), repeats: int = 5,
                      seeds: int = 5) -> ScalingReport:
    """Time per outer iteration over an N_t sweep and a DS bits sweep."""
    points = [(s, base.replace(N_t=n)) for s in schemes for n in n_t_values]
    points += [("DSWB", base.replace(bits=b)) for b in bits_values]
    flat = time_points(points, repeats, seeds)
    n = len(n_t_values)
    times = {s: flat[i * n:(i + 1) * n] for i, s in enumerate(schemes)}
    slopes = {s: loglog_slope(n_t_values, t) for s, t in times.items()}
    ds_times = flat[len(schemes) * n:]
    a, _, r2 = linear_fit([2 ** b for b in bits_values], ds_times)
    return ScalingReport(list(n_t_values), times, slopes, 2.0, list(bits_values), ds_times, r2, a)
