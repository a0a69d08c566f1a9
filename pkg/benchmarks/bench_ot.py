#!/usr/bin/env python3
"""Time the compiled transportation-simplex kernel against its pure-Python
twin on identical instances, then on a whole curvature-table build.

Run from the repository root after an editable install:

    python3 benchmarks/bench_ot.py
    python3 benchmarks/bench_ot.py --sizes 4,8,24 --count 500 --graph-nodes 0
"""

import argparse
import sys
import time

import numpy as np

import trigad.curvature as curvature
from trigad import _ot_py
from trigad.graph import synthetic_communities

try:
    from trigad import _ot as _ot_compiled
except ImportError:
    _ot_compiled = None

AGREE_TOL = 1e-9


def make_instances(rng, size, count):
    out = []
    for _ in range(count):
        m = int(rng.integers(2, size + 1))
        n = int(rng.integers(2, size + 1))
        a = rng.random(m) + 0.05
        b = rng.random(n) + 0.05
        out.append((rng.random((m, n)) * 4.0, a / a.sum(), b / b.sum()))
    return out


def time_solver(solve, instances, repeats):
    values = None
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        got = [solve(cost, a, b) for cost, a, b in instances]
        best = min(best, time.perf_counter() - t0)
        values = np.array(got)
    return best, values


def bench_kernels(args):
    rng = np.random.default_rng(args.seed)
    print(f"{'support cap':>12} {'instances':>10} {'python':>10} "
          f"{'compiled':>10} {'speedup':>8}   max gap")
    worst = 0.0
    for size in args.sizes:
        instances = make_instances(rng, size, args.count)
        t_py, v_py = time_solver(_ot_py.solve, instances, args.repeats)
        if _ot_compiled is None:
            print(f"{size:>12} {len(instances):>10} {t_py * 1e3:>8.1f}ms "
                  f"{'-':>10} {'-':>8}")
            continue
        t_c, v_c = time_solver(_ot_compiled.solve, instances, args.repeats)
        gap = float(np.abs(v_py - v_c).max())
        worst = max(worst, gap)
        print(f"{size:>12} {len(instances):>10} {t_py * 1e3:>8.1f}ms "
              f"{t_c * 1e3:>8.1f}ms {t_py / t_c:>7.1f}x   {gap:.2e}")
    return worst


def bench_table(args):
    """End-to-end: one curvature table per backend on the same graph."""
    g = synthetic_communities(args.graph_nodes, 8, 0.04, 0.004, seed=args.seed)
    results = {}
    backends = [("python", _ot_py)]
    if _ot_compiled is not None:
        backends.insert(0, ("compiled", _ot_compiled))
    saved = curvature._ot_backend
    try:
        for name, module in backends:
            curvature._ot_backend = module
            t0 = time.perf_counter()
            table = curvature.mixed_curvature_table(g, delta=0.5)
            results[name] = (time.perf_counter() - t0, table.kappa_raw)
    finally:
        curvature._ot_backend = saved
    edges = next(iter(results.values()))[1].shape[0]
    print(f"\ncurvature table: {args.graph_nodes} nodes, {edges} edges")
    for name, (elapsed, _) in results.items():
        print(f"  {name:>8}: {elapsed:.2f}s")
    if len(results) == 2:
        gap = float(np.abs(results["python"][1]
                           - results["compiled"][1]).max())
        print(f"  max curvature gap: {gap:.2e}")
        return gap
    return 0.0


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="4,8,16",
                        help="comma list of per-side support caps")
    parser.add_argument("--count", type=int, default=300,
                        help="instances per size")
    parser.add_argument("--repeats", type=int, default=3,
                        help="timing repeats (best is reported)")
    parser.add_argument("--graph-nodes", type=int, default=300,
                        help="nodes for the table benchmark (0 to skip)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    args.sizes = [int(s) for s in args.sizes.split(",") if s]

    if _ot_compiled is None:
        print("compiled kernel not built; timing the pure-Python twin only")
    worst = bench_kernels(args)
    if args.graph_nodes > 0:
        worst = max(worst, bench_table(args))
    if worst > AGREE_TOL:
        print(f"BACKENDS DISAGREE: {worst:.2e} > {AGREE_TOL:g}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
