"""Backend equivalence: the compiled extension and the numpy fallback must
agree on every kernel to floating-point roundoff."""

import numpy as np
import pytest

from affclt import kernels
from affclt.kernels import _backend_py

try:
    from affclt.kernels import _ext
except ImportError:  # pragma: no cover
    _ext = None

needs_ext = pytest.mark.skipif(_ext is None, reason="compiled extension unavailable")


@pytest.fixture
def csr_case():
    rng = np.random.default_rng(0)
    m = 40
    sets = [np.unique(np.append(rng.integers(0, m, 4), i)) for i in range(m)]
    indptr = np.zeros(m + 1, dtype=np.int64)
    for i, s in enumerate(sets):
        indptr[i + 1] = indptr[i] + s.size
    indices = np.concatenate(sets).astype(np.int64)
    values = rng.standard_normal((30, m))
    return values, indptr, indices


def test_csr_row_sums_matches_naive(csr_case):
    values, indptr, indices = csr_case
    got = kernels.csr_row_sums(values, indptr, indices)
    for i in range(indptr.size - 1):
        row = indices[indptr[i] : indptr[i + 1]]
        assert got[:, i] == pytest.approx(values[:, row].sum(axis=1))


@needs_ext
def test_backends_agree(csr_case):
    values, indptr, indices = csr_case
    rng = np.random.default_rng(1)
    m = values.shape[1]
    i_idx = rng.integers(0, m, 200)
    j_idx = rng.integers(0, m, 200)
    k_idx = rng.integers(0, m, 200)
    centered = values - values.mean(axis=0)
    bins = rng.integers(0, 4, values.shape)

    pairs = [
        (
            _backend_py.csr_row_sums(values, indptr, indices),
            _ext.csr_row_sums(values, indptr, indices),
        ),
        (
            _backend_py.triple_product_sums(values, i_idx, j_idx, k_idx),
            _ext.triple_product_sums(values, i_idx, j_idx, k_idx),
        ),
        (
            _backend_py.pair_cov_values(centered, i_idx, j_idx),
            _ext.pair_cov_values(centered, i_idx, j_idx),
        ),
        (
            _backend_py.binned_sign_pair_stats(values, bins, i_idx, j_idx, 4),
            _ext.binned_sign_pair_stats(
                np.ascontiguousarray(values), np.ascontiguousarray(bins), i_idx, j_idx, 4
            ),
        ),
    ]
    for py_out, ext_out in pairs:
        assert np.asarray(ext_out) == pytest.approx(np.asarray(py_out), rel=1e-9, abs=1e-12)


@needs_ext
def test_sir_reach_backends_agree():
    rng = np.random.default_rng(2)
    n = 60
    import scipy.sparse as sp

    adj = sp.random(n, n, density=0.08, random_state=3, dtype=np.float64)
    adj = ((adj + adj.T) > 0).astype(np.float64)
    adj.setdiag(0)
    adj = sp.csr_matrix(adj)
    indptr = adj.indptr.astype(np.int64)
    indices = adj.indices.astype(np.int64)
    mask = rng.random(indices.size) < 0.5
    seeds = np.array([0, 5], dtype=np.int64)
    for hops in (0, 1, 2, n):
        py_out = _backend_py.sir_reach(indptr, indices, mask, seeds, hops)
        ext_out = _ext.sir_reach(indptr, indices, mask.view(np.uint8), seeds, hops)
        assert np.array_equal(np.asarray(py_out), np.asarray(ext_out))


def test_triple_product_uses_absolute_first_factor():
    values = np.array([[-2.0, 3.0]])
    out = kernels.triple_product_sums(values, np.array([0]), np.array([1]), np.array([1]))
    assert out[0] == pytest.approx(2.0 * 9.0)  # |−2| * 3 * 3


def test_binned_sign_stats_hand_case():
    # One pair, 4 replications, 2 bins: bins split replications {0,1} vs {2,3}.
    values = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])
    bins = np.array([[0, 0], [0, 0], [0, 1], [0, 1]])
    out = kernels.binned_sign_pair_stats(
        values, bins, np.array([0]), np.array([1]), 2
    )
    # bin0: 1*1 + 1*(-1) = 0; bin1: (-1)*1 + 1*1 = 0 -> (|0|+|0|)/4
    assert out[0] == pytest.approx(0.0)


def test_sir_reach_hop_limit():
    # path 0-1-2, all edges open, 1 hop from node 0 reaches {0,1}
    indptr = np.array([0, 1, 3, 4], dtype=np.int64)
    indices = np.array([1, 0, 2, 1], dtype=np.int64)
    mask = np.ones(4, dtype=bool)
    out = kernels.sir_reach(indptr, indices, mask, np.array([0], dtype=np.int64), 1)
    assert out.tolist() == [True, True, False]
    out2 = kernels.sir_reach(indptr, indices, mask, np.array([0], dtype=np.int64), 2)
    assert out2.tolist() == [True, True, True]
