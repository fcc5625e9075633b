# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementations of the hot kernels.

Same contracts as `_backend_py`; see the docstrings there.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_row_sums(double[:, ::1] values, long[::1] indptr, long[::1] indices):
    cdef Py_ssize_t big_r = values.shape[0]
    cdef Py_ssize_t m = indptr.shape[0] - 1
    out_arr = np.zeros((big_r, m))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, i, pos
    cdef double acc
    for r in range(big_r):
        for i in range(m):
            acc = 0.0
            for pos in range(indptr[i], indptr[i + 1]):
                acc += values[r, indices[pos]]
            out[r, i] = acc
    return out_arr


def triple_product_sums(double[:, ::1] values, long[::1] i_idx, long[::1] j_idx,
                        long[::1] k_idx, long chunk=0):
    cdef Py_ssize_t big_r = values.shape[0]
    cdef Py_ssize_t s = i_idx.shape[0]
    out_arr = np.zeros(big_r)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r, t
    cdef double acc, vi
    for r in range(big_r):
        acc = 0.0
        for t in range(s):
            vi = values[r, i_idx[t]]
            if vi < 0.0:
                vi = -vi
            acc += vi * values[r, j_idx[t]] * values[r, k_idx[t]]
        out[r] = acc
    return out_arr


def pair_cov_values(double[:, ::1] centered, long[::1] i_idx, long[::1] j_idx,
                    long chunk=0):
    cdef Py_ssize_t big_r = centered.shape[0]
    cdef Py_ssize_t s = i_idx.shape[0]
    out_arr = np.empty(s)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r, t
    cdef double acc
    for t in range(s):
        acc = 0.0
        for r in range(big_r):
            acc += centered[r, i_idx[t]] * centered[r, j_idx[t]]
        out[t] = acc / (big_r - 1)
    return out_arr


def binned_sign_pair_stats(double[:, ::1] values, long[:, ::1] bins,
                           long[::1] i_idx, long[::1] j_idx, long n_bins,
                           long chunk=0):
    cdef Py_ssize_t big_r = values.shape[0]
    cdef Py_ssize_t s = i_idx.shape[0]
    out_arr = np.empty(s)
    cdef double[::1] out = out_arr
    binsum_arr = np.zeros(n_bins)
    cdef double[::1] binsums = binsum_arr
    cdef Py_ssize_t r, t, b
    cdef double acc
    for t in range(s):
        for b in range(n_bins):
            binsums[b] = 0.0
        for r in range(big_r):
            binsums[bins[r, j_idx[t]]] += values[r, i_idx[t]] * values[r, j_idx[t]]
        acc = 0.0
        for b in range(n_bins):
            acc += binsums[b] if binsums[b] >= 0.0 else -binsums[b]
        out[t] = acc / big_r
    return out_arr


def sir_reach(long[::1] indptr, long[::1] indices, cnp.uint8_t[::1] open_mask,
              long[::1] seeds, long max_hops):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    infected_arr = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] infected = infected_arr.view(np.uint8)
    queue_arr = np.empty(n, dtype=np.int64)
    next_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] queue = queue_arr
    cdef long[::1] nxt = next_arr
    cdef Py_ssize_t q_len = 0, n_len, t, pos, hop
    cdef long node, tgt
    for t in range(seeds.shape[0]):
        node = seeds[t]
        if not infected[node]:
            infected[node] = 1
            queue[q_len] = node
            q_len += 1
    hop = 0
    while q_len > 0 and hop < max_hops:
        n_len = 0
        for t in range(q_len):
            node = queue[t]
            for pos in range(indptr[node], indptr[node + 1]):
                if open_mask[pos]:
                    tgt = indices[pos]
                    if not infected[tgt]:
                        infected[tgt] = 1
                        nxt[n_len] = tgt
                        n_len += 1
        queue, nxt = nxt, queue
        q_len = n_len
        hop += 1
    return infected_arr
