#!/usr/bin/env python3
"""Benchmark the compiled pairwise kernels against the numpy fallback.

Times the three hot functions (energy, gradient, Picone matrix) on
assembled forms of increasing size and reports the speedup of the Cython
core, followed by an end-to-end least-eigenvalue solve with whichever
backend the package selected at import.

Usage:
    python benchmarks/bench_kernels.py [--sizes 32 64 128 256] [--csv out.csv]
"""

from __future__ import annotations

import argparse
import csv
import time

import numpy as np

from fheig import _kernels_py
from fheig import eigen, kernels
from fheig import nonlocal_form as nf
from fheig.grid import build_interval_grid
from fheig.hardy import HardyParams
from fheig.weights import constant_weight

try:
    from fheig import _kernels
except ImportError:
    _kernels = None


def _time(fn, *args, budget=0.25):
    fn(*args)                      # warm up
    best = np.inf
    spent = 0.0
    while spent < budget:
        t0 = time.perf_counter()
        fn(*args)
        dt = time.perf_counter() - t0
        best = min(best, dt)
        spent += dt
    return best


def run(sizes, p=3.0):
    rows = []
    params = HardyParams(1, 0.25, p)
    for m in sizes:
        grid = build_interval_grid(-1.0, 1.0, m, 1.0)
        form = nf.assemble(params, grid, 0.0)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(form.n_dof)
        v = np.abs(rng.standard_normal(form.n_dof)) + 0.5
        c0 = form.energy_coef
        for name, args in (
            ("energy", (form.K, c0, u, p)),
            ("gradient", (form.K, c0, u, p)),
            ("picone", (form.K, np.abs(u), v, p)),
        ):
            t_py = _time(getattr(_kernels_py, f"pairwise_{name}" if name != "picone" else "picone_matrix"), *args)
            if _kernels is not None:
                t_cy = _time(getattr(_kernels, f"pairwise_{name}" if name != "picone" else "picone_matrix"), *args)
            else:
                t_cy = float("nan")
            rows.append({
                "m": m,
                "kernel": name,
                "python_us": t_py * 1e6,
                "cython_us": t_cy * 1e6,
                "speedup": t_py / t_cy if t_cy == t_cy else float("nan"),
            })
    return rows


def run_solve(m=96, p=3.0):
    params = HardyParams(1, 0.25, p)
    grid = build_interval_grid(-1.0, 1.0, m, 1.0)
    form = nf.assemble(params, grid, 0.0)
    V = constant_weight(1.0)
    t0 = time.perf_counter()
    pair = eigen.solve_lambda1(form, V, eigen.SolverOptions(seed=0))
    return time.perf_counter() - t0, pair


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256, 512])
    parser.add_argument("--csv", default=None, help="write the table to this CSV path")
    args = parser.parse_args()

    if _kernels is None:
        print("note: compiled extension not available, timing the fallback only")
    rows = run(args.sizes)
    print(f"{'m':>6} {'kernel':>10} {'python':>12} {'cython':>12} {'speedup':>9}")
    for r in rows:
        cy = f"{r['cython_us']:10.1f}us" if r["cython_us"] == r["cython_us"] else "       n/a"
        print(f"{r['m']:>6} {r['kernel']:>10} {r['python_us']:10.1f}us {cy} {r['speedup']:8.2f}x")

    dt, pair = run_solve()
    print(f"\nend-to-end solve (m=96, p=3, backend={kernels.backend_name}): "
          f"{dt * 1e3:.1f} ms, {pair.iterations} iterations, lambda_1={pair.value:.9g}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
