"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the pure numpy/scipy
fallback is always available.  Set ``AFFCLT_BACKEND=py`` or ``ext`` to force a
choice (forcing ``ext`` raises if the extension is missing).  The wrappers
below normalize dtypes/contiguity so both backends see identical inputs.
"""

from __future__ import annotations

import os

import numpy as np

from . import _backend_py

_forced = os.environ.get("AFFCLT_BACKEND", "").strip().lower()

if _forced == "py":
    _impl = _backend_py
    BACKEND = "py"
else:
    try:
        from . import _ext as _impl  # type: ignore[no-redef]

        BACKEND = "ext"
    except ImportError:
        if _forced == "ext":
            raise
        _impl = _backend_py
        BACKEND = "py"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def csr_row_sums(values, indptr, indices):
    return _impl.csr_row_sums(_f64(values), _i64(indptr), _i64(indices))


def triple_product_sums(values, i_idx, j_idx, k_idx):
    return _impl.triple_product_sums(_f64(values), _i64(i_idx), _i64(j_idx), _i64(k_idx))


def pair_cov_values(centered, i_idx, j_idx):
    return _impl.pair_cov_values(_f64(centered), _i64(i_idx), _i64(j_idx))


def binned_sign_pair_stats(values, bins, i_idx, j_idx, n_bins):
    return _impl.binned_sign_pair_stats(
        _f64(values), _i64(bins), _i64(i_idx), _i64(j_idx), int(n_bins)
    )


def sir_reach(indptr, indices, open_mask, seeds, max_hops):
    mask = np.ascontiguousarray(open_mask, dtype=bool)
    if BACKEND == "ext":
        mask = mask.view(np.uint8)
    return _impl.sir_reach(_i64(indptr), _i64(indices), mask, _i64(seeds), int(max_hops))


__all__ = [
    "BACKEND",
    "csr_row_sums",
    "triple_product_sums",
    "pair_cov_values",
    "binned_sign_pair_stats",
    "sir_reach",
]
