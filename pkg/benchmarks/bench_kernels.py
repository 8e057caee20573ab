"""Benchmark the JIT-compiled kernels against the pure-NumPy fallback.

Run from the repo root:

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --updates 500000 --items 2000

Both paths are imported directly, so the comparison works regardless of
the ROBIRANK_NO_NUMBA flag; the flag only changes which path the
library itself uses.
"""

import argparse
import time

import numpy as np

from robirank._kernels import (
    NUMBA_ENABLED,
    pair_inner_sums,
    pair_inner_sums_fallback,
    sgd_block_updates,
    sgd_block_updates_fallback,
)


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--contexts", type=int, default=500)
    ap.add_argument("--items", type=int, default=1000)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--pairs", type=int, default=5000)
    ap.add_argument("--updates", type=int, default=200000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    U = rng.normal(0, 1 / np.sqrt(args.dim), (args.contexts, args.dim))
    V = rng.normal(0, 1 / np.sqrt(args.dim), (args.items, args.dim))
    px = np.sort(rng.integers(0, args.contexts, args.pairs)).astype(np.int64)
    py = rng.integers(0, args.items, args.pairs).astype(np.int64)
    xi = rng.uniform(0.01, 1.0, args.pairs)
    pair_idx = np.arange(args.pairs, dtype=np.int64)
    all_items = np.arange(args.items, dtype=np.int64)
    choice = rng.integers(0, args.pairs, args.updates)
    negraw = rng.integers(0, args.items - 1, args.updates)

    print(f"numba path compiled: {NUMBA_ENABLED}")
    if not NUMBA_ENABLED:
        print("(ROBIRANK_NO_NUMBA is set or numba is missing; "
              "'jit' rows below rerun the fallback)")

    out = np.empty(args.pairs)
    pair_inner_sums(U, V, px, py, out)  # warm the compile cache

    t_jit = _time(lambda: pair_inner_sums(U, V, px, py, out), args.repeat)
    t_py = _time(lambda: pair_inner_sums_fallback(U, V, px, py, out), args.repeat)
    print(f"pair_inner_sums   {args.pairs} pairs x {args.items} items: "
          f"jit {t_jit * 1e3:8.2f} ms   numpy {t_py * 1e3:8.2f} ms   "
          f"speedup {t_py / t_jit:6.1f}x")

    def run_jit():
        sgd_block_updates(U.copy(), V.copy(), px, py, xi, pair_idx,
                          choice, negraw, all_items, all_items, 0.01, 0.0, 1.0)

    def run_py():
        sgd_block_updates_fallback(U.copy(), V.copy(), px, py, xi, pair_idx,
                                   choice, negraw, all_items, all_items, 0.01, 0.0, 1.0)

    run_jit()  # warm the compile cache
    t_jit = _time(run_jit, args.repeat)
    t_py = _time(run_py, max(1, args.repeat - 2))
    print(f"sgd_block_updates {args.updates} updates (dim {args.dim}):      "
          f"jit {t_jit * 1e3:8.2f} ms   python {t_py * 1e3:8.2f} ms   "
          f"speedup {t_py / t_jit:6.1f}x")


if __name__ == "__main__":
    main()
