#!/usr/bin/env python3
"""Benchmark the compiled tree-scan kernels against the numpy fallback.

Times the three single-vector kernels (down_sum, down_max, up_sum) on a range
of grid sizes, plus an end-to-end apply_T, under both backends. Run from the
repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]

The compiled backend must be importable for a comparison; otherwise only the
fallback is timed.
"""

import argparse
import timeit

import numpy as np

from twoweight import _kernels
from twoweight._kernels import _fallback
from twoweight.grid import Measure, build_grid
from twoweight.operators import CubeWeights, apply_T

try:
    from twoweight._kernels import _core
except ImportError:
    _core = None

GRIDS = [(1, 8), (1, 12), (1, 16), (1, 20), (2, 8), (2, 10), (3, 6)]


def _time(fn, repeats):
    best = min(timeit.repeat(fn, number=1, repeat=repeats))
    return best * 1e3  # ms


def bench_kernels(repeats):
    print(f"active backend: {_kernels.BACKEND}")
    if _core is None:
        print("compiled core not importable; timing fallback only\n")
    header = f"{'grid':>10} {'cubes':>9} {'kernel':>9} {'fallback':>11} "
    header += f"{'compiled':>11} {'speedup':>8}" if _core else ""
    print(header)
    for d, depth in GRIDS:
        g = build_grid(d, depth)
        rng = np.random.default_rng(0)
        vals = rng.exponential(size=g.n_cubes)
        args_down = (vals, g.parent, g.level_offsets)
        args_up = (vals, g.child_order, g.level_offsets)
        for name, args in (("down_sum", args_down), ("down_max", args_down), ("up_sum", args_up)):
            t_fb = _time(lambda: getattr(_fallback, name)(*args), repeats)
            line = f"{f'{d}x{depth}':>10} {g.n_cubes:>9} {name:>9} {t_fb:>9.3f}ms"
            if _core is not None:
                t_c = _time(lambda: getattr(_core, name)(*args), repeats)
                line += f" {t_c:>9.3f}ms {t_fb / t_c:>7.2f}x"
            print(line)
    print()


def bench_apply(repeats):
    # end to end: one operator application, dominated by two tree scans
    print(f"{'grid':>10} {'leaves':>9} {'apply_T':>11}")
    for d, depth in GRIDS:
        g = build_grid(d, depth)
        rng = np.random.default_rng(1)
        tau = CubeWeights(g, rng.exponential(size=g.n_cubes))
        sigma = Measure(g, rng.exponential(size=g.n_leaves))
        t = _time(lambda: apply_T(tau, sigma), repeats)
        print(f"{f'{d}x{depth}':>10} {g.n_leaves:>9} {t:>9.3f}ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7, help="timing repeats (best is kept)")
    args = ap.parse_args()
    bench_kernels(args.repeats)
    bench_apply(args.repeats)


if __name__ == "__main__":
    main()
