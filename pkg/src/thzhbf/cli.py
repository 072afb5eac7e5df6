"""Command-line entry point: ``thzhbf {sweep,gainmap,bench,validate}``.

On failure a one-line JSON error record is written to stderr and the exit
status is nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, SystemConfig, load_config
from .harness import AXES, FIG2_CONFIG, SCHEMES, ExperimentSpec, benchmark_scaling, emit_gain_map, run_experiment


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors as a JSON record too."""

    def error(self, message):
        self.print_usage(sys.stderr)
        record = {"status": "error", "command": self.prog, "type": "UsageError", "message": message}
        print(json.dumps(record), file=sys.stderr)
        sys.exit(2)


def _list(text: str, kind=str) -> list:
    return [kind(x) for x in text.replace(",", " ").split()]


def _base_config(args, default: SystemConfig | None = None) -> SystemConfig:
    cfg = load_config(args.config) if args.config else (default or SystemConfig())
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    if getattr(args, "snr_db", None) is not None:
        cfg = cfg.with_snr_db(args.snr_db)
    cfg.validate()
    return cfg


def cmd_sweep(args) -> dict:
    spec = ExperimentSpec(
        base=_base_config(args),
        sweep_axis=args.axis,
        sweep_values=_list(args.values, float),
        schemes=_list(args.schemes) if args.schemes else list(SCHEMES),
        trials=args.trials,
        output_path=args.out,
        workers=args.workers,
    )
    res = run_experiment(spec)
    errors = sum(1 for r in res.rows if r.error)
    return {"rows": len(res.rows), "errors": errors, "files": {k: str(v) for k, v in res.paths.items()}}


def cmd_gainmap(args) -> dict:
    cfg = _base_config(args, FIG2_CONFIG)
    angles = np.arange(args.angle_min, args.angle_max + 0.5 * args.angle_step, args.angle_step)
    n = emit_gain_map(cfg, angles, args.out, args.theta)
    return {"rows": n, "file": str(args.out)}


def cmd_bench(args) -> dict:
    cfg = _base_config(args)
    rep = benchmark_scaling(cfg, _list(args.n_t, int), _list(args.bits, int), repeats=args.repeats,
                            seeds=args.trials)
    out = {
        "n_t": rep.n_t_values,
        "seconds_per_iteration": rep.times,
        "loglog_slope": rep.slopes,
        "predicted_exponent": rep.predicted_exponent,
        "ds_bits": rep.bits_values,
        "ds_seconds_per_iteration": rep.ds_bits_times,
        "ds_linear_r2": rep.ds_linear_r2,
        "checks": rep.checks(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def cmd_validate(args) -> dict:
    import pytest  # test-time dependency, only needed here

    here = Path(__file__).resolve().parents[2] / "tests"
    target = [str(here)] if here.is_dir() else ["--pyargs", "thzhbf"]
    code = pytest.main(["-q", "-m", "not slow", *target])
    if code:
        raise RuntimeError(f"invariant suite failed (pytest exit {int(code)})")
    return {"status": "ok"}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thzhbf", description="Wideband THz hybrid precoding experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with SystemConfig fields")
    common.add_argument("--seed", type=int, help="base seed (overrides the config file)")
    common.add_argument("--snr-db", type=float, dest="snr_db", help="sets P_t = 10^(snr/10), sigma^2 = 1")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", parents=[common], help="run a seeded parameter sweep")
    s.add_argument("--axis", choices=AXES, required=True)
    s.add_argument("--values", required=True, help="comma or space separated, ascending")
    s.add_argument("--schemes", help=f"subset of {','.join(SCHEMES)}")
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="results.csv")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gainmap", parents=[common],
                       help="write the beam-squint gain table (default N_t=K=128, b=3, B=30 GHz)")
    g.add_argument("--theta", type=float, default=45.0, help="target angle in degrees")
    g.add_argument("--angle-min", type=float, default=-90.0)
    g.add_argument("--angle-max", type=float, default=90.0)
    g.add_argument("--angle-step", type=float, default=1.0)
    g.add_argument("--out", default="gainmap.csv")
    g.set_defaults(func=cmd_gainmap)

    b = sub.add_parser("bench", parents=[common], help="time per outer iteration vs N_t and bits")
    b.add_argument("--n-t", default="16,32,64")
    b.add_argument("--bits", default="1,2,3,4")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--trials", type=int, default=5, help="channels averaged per point")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("validate", help="run the invariant test suite")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except (ConfigError, ValueError, OSError, RuntimeError, ArithmeticError) as exc:
        record = {"status": "error", "command": args.command, "type": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "command": args.command, **result}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
