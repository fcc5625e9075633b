"""Pure numpy/scipy implementations of the hot kernels.

These are the reference implementations; `affclt.kernels` swaps in the Cython
extension when it is available.  Both backends must agree to floating-point
roundoff (summation order may differ, so agreement is to ~1e-9 relative, not
bitwise).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def csr_row_sums(values: np.ndarray, indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """G[r, i] = sum of values[r, j] over the CSR row i (affinity-set sums)."""
    m = indptr.size - 1
    mat = sp.csr_matrix(
        (np.ones(indices.size), indices, indptr), shape=(m, m)
    )
    return np.ascontiguousarray((mat @ values.T).T)


def triple_product_sums(
    values: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    k_idx: np.ndarray,
    chunk: int = 1_000_000,
) -> np.ndarray:
    """Per-replication sums of |V[:, i]| * V[:, j] * V[:, k] over sampled triples."""
    big_r = values.shape[0]
    out = np.zeros(big_r)
    for lo in range(0, i_idx.size, chunk):
        sl = slice(lo, min(lo + chunk, i_idx.size))
        out += np.einsum(
            "rs,rs,rs->r",
            np.abs(values[:, i_idx[sl]]),
            values[:, j_idx[sl]],
            values[:, k_idx[sl]],
        )
    return out


def pair_cov_values(
    centered: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    chunk: int = 1_000_000,
) -> np.ndarray:
    """Unbiased sample covariances cov(W[:, i], W[:, j]) for each sampled pair.

    `centered` must already have its replication mean removed per column.
    """
    big_r = centered.shape[0]
    out = np.empty(i_idx.size)
    for lo in range(0, i_idx.size, chunk):
        sl = slice(lo, min(lo + chunk, i_idx.size))
        out[sl] = np.einsum(
            "rs,rs->s", centered[:, i_idx[sl]], centered[:, j_idx[sl]]
        ) / (big_r - 1)
    return out


def binned_sign_pair_stats(
    values: np.ndarray,
    bins: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    n_bins: int,
    chunk: int = 100_000,
) -> np.ndarray:
    """Sign-weighted conditional-mean statistic per pair.

    For pair (i, j): t = (1/R) * sum over bins b of |S_b| where
    S_b = sum over replications r with bins[r, j] == b of V[r, i] * V[r, j].
    The absolute value realizes sign(E[Z_i Z_j | Z_j]) with ties broken to +1
    (a zero bin sum contributes zero either way).
    """
    big_r = values.shape[0]
    out = np.empty(i_idx.size)
    for lo in range(0, i_idx.size, chunk):
        sl = slice(lo, min(lo + chunk, i_idx.size))
        prods = values[:, i_idx[sl]] * values[:, j_idx[sl]]  # (R, s)
        jb = bins[:, j_idx[sl]]  # (R, s)
        s = prods.shape[1]
        binsums = np.zeros((n_bins, s))
        cols = np.broadcast_to(np.arange(s), (big_r, s))
        np.add.at(binsums, (jb.ravel(), cols.ravel()), prods.ravel())
        out[sl] = np.abs(binsums).sum(axis=0) / big_r
    return out


def sir_reach(
    indptr: np.ndarray,
    indices: np.ndarray,
    open_mask: np.ndarray,
    seeds: np.ndarray,
    max_hops: int,
) -> np.ndarray:
    """Reachable set through open directed edges, within `max_hops` hops.

    The adjacency is CSR over directed entries; open_mask aligns with
    `indices`.  Equivalent to the discrete-time SIR outcome under one uniform
    per directed attempt.
    """
    n = indptr.size - 1
    infected = np.zeros(n, dtype=bool)
    infected[seeds] = True
    frontier = np.unique(np.asarray(seeds, dtype=np.int64))
    hops = 0
    while frontier.size and hops < max_hops:
        starts = indptr[frontier]
        stops = indptr[frontier + 1]
        counts = stops - starts
        total = int(counts.sum())
        if total == 0:
            break
        # Positions of all CSR entries of the frontier rows.
        offsets = np.repeat(stops - np.cumsum(counts), counts)
        positions = offsets + np.arange(total)
        targets = indices[positions[open_mask[positions]]]
        fresh = targets[~infected[targets]]
        if fresh.size == 0:
            break
        frontier = np.unique(fresh)
        infected[frontier] = True
        hops += 1
    return infected
