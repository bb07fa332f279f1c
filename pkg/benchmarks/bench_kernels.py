"""Benchmark the compiled interpolation kernels against the numpy reference.

Runs each kernel on training-sized inputs with both backends, checks the
outputs stay bit-identical, and reports the speedup.

Usage: python benchmarks/bench_kernels.py [--batch 131072] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from usrn.kernels import reference


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=131072)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--features", type=int, default=8)
    parser.add_argument("--grid", type=int, default=24)
    args = parser.parse_args()

    try:
        from usrn.kernels import _fastcore as compiled
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    coords = rng.uniform(-1.0, 1.0, (args.batch, 3))
    n = args.grid
    table = rng.normal(size=(n * n * n, args.features))
    idx, w = reference.trilinear_corners(n, n, n, coords)
    upstream = rng.normal(size=(args.batch, args.features))

    cases = [
        (
            "trilinear_corners",
            lambda m: m.trilinear_corners(n, n, n, coords),
        ),
        (
            "hash_corners",
            lambda m: m.hash_corners(33, 14, coords),
        ),
        (
            "weighted_gather",
            lambda m: m.weighted_gather(table, idx, w),
        ),
        (
            "weighted_scatter_add",
            lambda m: m.weighted_scatter_add(
                np.zeros_like(table), idx, w, upstream
            ),
        ),
    ]

    print(
        f"batch={args.batch} grid={n}^3 features={args.features} "
        f"(best of {args.repeats})"
    )
    print(f"{'kernel':<22} {'reference':>12} {'compiled':>12} {'speedup':>9}")
    for name, call in cases:
        ref_out = call(reference)
        fast_out = call(compiled)
        if isinstance(ref_out, tuple):
            match = all(np.array_equal(a, b) for a, b in zip(ref_out, fast_out))
        elif ref_out is None:
            ref_buf = np.zeros_like(table)
            fast_buf = np.zeros_like(table)
            reference.weighted_scatter_add(ref_buf, idx, w, upstream)
            compiled.weighted_scatter_add(fast_buf, idx, w, upstream)
            match = np.array_equal(ref_buf, fast_buf)
        else:
            match = np.array_equal(ref_out, fast_out)
        if not match:
            print(f"{name:<22} BACKEND OUTPUTS DIFFER")
            return 1
        t_ref = _best_of(lambda: call(reference), args.repeats)
        t_fast = _best_of(lambda: call(compiled), args.repeats)
        print(
            f"{name:<22} {t_ref * 1e3:>10.2f}ms {t_fast * 1e3:>10.2f}ms "
            f"{t_ref / t_fast:>8.2f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
