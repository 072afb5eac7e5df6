"""Compare the compiled and pure-Python kernel backends.

Times the FC element sweep, the DS row sweep and a full solve_fc on the
same inputs with each backend, checks that the outputs agree, and prints
a small table.

    python3 benchmarks/bench_kernels.py [--n-t 16 64] [--k 8 32] [--repeats 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from thzhbf import kernels
from thzhbf.channel import generate_channel
from thzhbf.config import Structure, SystemConfig
from thzhbf.solver_ds import DsWorkspace, expand_selection, init_ds
from thzhbf.solver_fc import build_workspace, init_fc, solve_fc
from thzhbf.evalcore import PhaseCodebook, digital_precoder


def best_of(fn, repeats):
    out, best = None, float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def fc_inputs(cfg):
    ch = generate_channel(cfg)
    cb = PhaseCodebook(cfg.bits)
    f_rf = init_fc(cfg, cb)
    f_bb = digital_precoder(ch.h, f_rf, cfg.N_s, cfg.P_t)
    ws = build_workspace(ch.gram(), f_rf, f_bb, 0, cfg.snr)
    return ws, f_rf[:, 0].copy(), cb.size


def bench_fc_sweep(name, ws, col, levels, snr, repeats):
    k = kernels.get(name)
    rows = np.arange(col.size, dtype=np.int64)

    def run():
        f = col.copy()
        t = ws.t.copy()
        k.fc_sweep(np.ascontiguousarray(ws.g), np.ascontiguousarray(ws.h_em), f, t, snr, rows, levels, 2)
        return f

    return best_of(run, repeats)


def bench_ds_sweep(name, cfg, repeats):
    k = kernels.get(name)
    ch = generate_channel(cfg)
    state = init_ds(cfg)
    f_bb = digital_precoder(ch.h, expand_selection(state), cfg.N_s, cfg.P_t)
    ws = DsWorkspace.start(ch, f_bb)
    hhat = np.ascontiguousarray(cfg.snr * ch.gram())

    def run():
        choice = state.choice()
        k.ds_sweep(hhat, ws.q_inv, choice, cfg.N_rf_t, 1 << cfg.bits, 1e-12)
        return choice

    return best_of(run, repeats)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-t", type=int, nargs="+", default=[16, 64])
    ap.add_argument("--k", type=int, nargs="+", default=[8, 32])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    names = kernels.available()
    if "compiled" not in names:
        print("compiled extension not built; only the python backend is available")
    print(f"{'kernel':<10} {'N_t':>4} {'K':>4} " + " ".join(f"{n:>12}" for n in names) + "  speedup  agree")
    for n_t in args.n_t:
        for K in args.k:
            cfg = SystemConfig(N_t=n_t, K=K)
            ws, col, levels = fc_inputs(cfg)
            res = {n: bench_fc_sweep(n, ws, col, levels, cfg.snr, args.repeats) for n in names}
            _report("fc_sweep", n_t, K, names, res, lambda a, b: np.allclose(a, b, atol=1e-12))

            dcfg = cfg.replace(structure=Structure.DYNAMIC_SUBARRAY)
            res = {n: bench_ds_sweep(n, dcfg, args.repeats) for n in names}
            _report("ds_sweep", n_t, K, names, res, lambda a, b: np.array_equal(a, b))

            ch = generate_channel(cfg)
            res = {}
            for n in names:
                res[n] = best_of(lambda: solve_fc(ch, backend=n)[1].final_rate, max(1, args.repeats // 2))
            _report("solve_fc", n_t, K, names, res, lambda a, b: abs(a - b) < 1e-9)


def _report(label, n_t, K, names, res, same):
    times = " ".join(f"{res[n][0] * 1e3:>10.3f}ms" for n in names)
    if len(names) > 1:
        speed = res["python"][0] / res["compiled"][0]
        agree = same(res["python"][1], res["compiled"][1])
        print(f"{label:<10} {n_t:>4} {K:>4} {times}  {speed:>6.1f}x  {agree}")
    else:
        print(f"{label:<10} {n_t:>4} {K:>4} {times}")


if __name__ == "__main__":
    main()
