"""Benchmark the compiled hot-kernel extension against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--reps 400] [--n 4096] [--repeat 5]

Each kernel is timed on identical inputs through both backends (best of
``--repeat`` runs) and the agreement of the results is checked, so the table
doubles as a consistency report.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from affclt.kernels import _backend_py

try:
    from affclt.kernels import _ext
except ImportError:
    _ext = None


def _best_time(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def _make_inputs(n, reps, seed=0):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((reps, n))
    # random sparse affinity structure: ~8 entries per row, reflexive
    per_row = 8
    cols = rng.integers(0, n, size=(n, per_row - 1))
    rows = [np.unique(np.append(cols[i], i)) for i in range(n)]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([r.size for r in rows])
    indices = np.concatenate(rows).astype(np.int64)

    budget = 200_000
    i_idx = rng.integers(0, n, budget, dtype=np.int64)
    j_idx = rng.integers(0, n, budget, dtype=np.int64)
    k_idx = rng.integers(0, n, budget, dtype=np.int64)

    n_bins = 16
    ranks = np.argsort(np.argsort(values, axis=0), axis=0)
    bins = (ranks * n_bins // reps).astype(np.int64)

    # sparse random digraph for the reachability kernel
    deg = 6
    g_cols = rng.integers(0, n, size=n * deg, dtype=np.int64)
    g_indptr = np.arange(0, n * deg + 1, deg, dtype=np.int64)
    open_mask = rng.random(n * deg) < 0.4
    seeds = rng.choice(n, 4, replace=False).astype(np.int64)

    centered = values - values.mean(axis=0)
    return {
        "csr_row_sums": (values, indptr, indices),
        "triple_product_sums": (values, i_idx, j_idx, k_idx),
        "pair_cov_values": (centered, i_idx, j_idx),
        "binned_sign_pair_stats": (values, bins, i_idx, j_idx, n_bins),
        "sir_reach": (g_indptr, g_cols, open_mask, seeds, 50),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4096, help="array size")
    parser.add_argument("--reps", type=int, default=400, help="replication count")
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats")
    args = parser.parse_args()

    if _ext is None:
        print("compiled extension not available; timing the python backend only")
    inputs = _make_inputs(args.n, args.reps)

    header = f"{'kernel':<24}{'python':>12}{'ext':>12}{'speedup':>10}  agree"
    print(header)
    print("-" * len(header))
    for name, arg_tuple in inputs.items():
        py_fn = getattr(_backend_py, name)
        t_py, out_py = _best_time(lambda: py_fn(*arg_tuple), args.repeat)
        if _ext is None:
            print(f"{name:<24}{t_py * 1e3:>10.2f}ms{'-':>12}{'-':>10}")
            continue
        ext_fn = getattr(_ext, name)
        t_ext, out_ext = _best_time(lambda: ext_fn(*arg_tuple), args.repeat)
        agree = np.allclose(
            np.asarray(out_py, dtype=np.float64),
            np.asarray(out_ext, dtype=np.float64),
            rtol=1e-9,
            atol=1e-9,
        )
        print(
            f"{name:<24}{t_py * 1e3:>10.2f}ms{t_ext * 1e3:>10.2f}ms"
            f"{t_py / t_ext:>9.1f}x  {'yes' if agree else 'NO'}"
        )


if __name__ == "__main__":
    main()
