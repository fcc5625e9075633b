"""Triangular-array data model, normalization matrix, and whitening.

Flat index convention, fixed repo-wide: observation ``i`` in dimension ``d``
maps to ``i * p + d``.  Everything downstream (affinity maps, covariance
kernels, the diagnostic sums) speaks in flat indices.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InsufficientReplications,
    MissingPairError,
    NotPositiveDefinite,
    ShapeMismatch,
)

__all__ = [
    "SampleArray",
    "AffinityMap",
    "CovKernel",
    "OmegaMatrix",
    "flat_index",
    "unflatten",
    "sum_vector",
    "omega_from_kernel",
    "whiten",
    "inverse_sqrt",
    "matrix_sqrt",
    "empirical_cov_kernel",
]


def flat_index(i: np.ndarray | int, d: np.ndarray | int, p: int):
    return np.asarray(i) * p + np.asarray(d)


def unflatten(flat: np.ndarray | int, p: int):
    flat = np.asarray(flat)
    return flat // p, flat % p


@dataclass(frozen=True)
class SampleArray:
    """One replication of the triangular array: n observations of p de-meaned values."""

    n: int
    p: int
    values: np.ndarray  # (n, p) float64
    model_id: str
    seed: int
    positively_associated: bool = False

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape != (self.n, self.p):
            raise ShapeMismatch(f"values shape {v.shape} != ({self.n}, {self.p})")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        """Values as a length n*p vector in flat-index order."""
        return self.values.reshape(-1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"model_id,{self.model_id}\n")
            fh.write(f"seed,{self.seed}\n")
            fh.write(f"n,{self.n}\n")
            fh.write(f"p,{self.p}\n")
            fh.write(f"positively_associated,{int(self.positively_associated)}\n")
            np.savetxt(fh, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "SampleArray":
        with open(path) as fh:
            meta = {}
            for _ in range(5):
                key, val = fh.readline().strip().split(",", 1)
                meta[key] = val
            values = np.loadtxt(io.StringIO(fh.read()), delimiter=",", ndmin=2)
        return cls(
            n=int(meta["n"]),
            p=int(meta["p"]),
            values=values,
            model_id=meta["model_id"],
            seed=int(meta["seed"]),
            positively_associated=bool(int(meta.get("positively_associated", "0"))),
        )


class AffinityMap:
    """For each flat index, the sorted flat indices of its affinity set.

    Stored in CSR form (``indptr``/``indices``) because the diagnostic sums
    stream over all (index, member) pairs.  Reflexivity is enforced at
    construction: every set contains its own index.
    """

    def __init__(
        self,
        n: int,
        p: int,
        indptr: np.ndarray,
        indices: np.ndarray,
        recipe_id: str = "custom",
        tuning: Optional[dict] = None,
    ):
        self.n = int(n)
        self.p = int(p)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.recipe_id = recipe_id
        self.tuning = dict(tuning or {})
        m = self.n * self.p
        if self.indptr.shape != (m + 1,):
            raise ValueError("indptr must have length n*p + 1")
        if self.indices.size != self.indptr[-1]:
            raise ValueError("indices length disagrees with indptr")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= m):
            raise ValueError("affinity member index out of range")
        self._check_reflexive()

    def _check_reflexive(self):
        for flat in range(self.n * self.p):
            row = self.indices[self.indptr[flat] : self.indptr[flat + 1]]
            pos = np.searchsorted(row, flat)
            if pos >= row.size or row[pos] != flat:
                raise ValueError(f"affinity set of flat index {flat} does not contain itself")

    @classmethod
    def from_sets(cls, n: int, p: int, sets: Sequence[Sequence[int]], **kw) -> "AffinityMap":
        indptr = np.zeros(n * p + 1, dtype=np.int64)
        rows = []
        for flat in range(n * p):
            row = np.unique(np.asarray(sets[flat], dtype=np.int64))
            rows.append(row)
            indptr[flat + 1] = indptr[flat] + row.size
        indices = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
        return cls(n, p, indptr, indices, **kw)

    def members(self, flat: int) -> np.ndarray:
        return self.indices[self.indptr[flat] : self.indptr[flat + 1]]

    def set_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_set_size(self) -> int:
        return int(self.set_sizes().max())

    @property
    def total_members(self) -> int:
        return int(self.indices.size)

    def row_index(self) -> np.ndarray:
        """Flat row index repeated once per member (same length as indices)."""
        return np.repeat(np.arange(self.n * self.p, dtype=np.int64), self.set_sizes())

    def contains_matrix(self) -> np.ndarray:
        """Dense boolean membership matrix; for small instances and oracles only."""
        m = self.n * self.p
        out = np.zeros((m, m), dtype=bool)
        out[self.row_index(), self.indices] = True
        return out

    def save(self, path) -> None:
        header = {
            "recipe_id": self.recipe_id,
            "n": self.n,
            "p": self.p,
            "tuning": self.tuning,
        }
        with open(path, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for flat in range(self.n * self.p):
                fh.write(" ".join(str(int(j)) for j in self.members(flat)) + "\n")

    @classmethod
    def load(cls, path) -> "AffinityMap":
        with open(path) as fh:
            header = json.loads(fh.readline())
            sets = [[int(tok) for tok in line.split()] for line in fh]
        return cls.from_sets(
            header["n"], header["p"], sets, recipe_id=header["recipe_id"], tuning=header["tuning"]
        )


@dataclass
class CovKernel:
    """Vectorized covariance map over flat index pairs.

    ``eval_pairs(a, b)`` takes equal-length arrays of flat indices and returns
    cov(Z_a, Z_b); entries the kernel does not cover are NaN.  Monte Carlo
    kernels also carry a standard-error map.
    """

    kind: str  # "analytic" | "monte_carlo"
    eval_pairs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    se_pairs: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("analytic", "monte_carlo"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, a, b) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        b = np.atleast_1d(np.asarray(b, dtype=np.int64))
        return self.eval_pairs(a, b)


@dataclass
class OmegaMatrix:
    """The p x p normalization matrix with its Frobenius norm and MC errors."""

    omega: np.ndarray
    frobenius: float
    n_used: int
    mc_se: np.ndarray
    asymmetry: float = 0.0

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.mc_se = np.asarray(self.mc_se, dtype=np.float64)
        fro = float(np.linalg.norm(self.omega))
        if fro > 0 and abs(self.frobenius - fro) > 1e-12 * fro:
            raise ValueError("frobenius field disagrees with the matrix")

    @property
    def p(self) -> int:
        return self.omega.shape[0]

    def symmetrized(self) -> np.ndarray:
        return (self.omega + self.omega.T) / 2.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "omega": self.omega.tolist(),
                "frobenius": self.frobenius,
                "n_used": self.n_used,
                "mc_se": self.mc_se.tolist(),
                "asymmetry": self.asymmetry,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "OmegaMatrix":
        d = json.loads(text)
        return cls(
            omega=np.asarray(d["omega"]),
            frobenius=d["frobenius"],
            n_used=d["n_used"],
            mc_se=np.asarray(d["mc_se"]),
            asymmetry=d["asymmetry"],
        )


def sum_vector(arr: SampleArray) -> np.ndarray:
    """Column sums of the de-meaned values: the vector S of the array."""
    return arr.values.sum(axis=0)


def omega_from_kernel(
    kernel: CovKernel,
    aff: AffinityMap,
    rows: Optional[np.ndarray] = None,
) -> OmegaMatrix:
    """Sum kernel covariances of each flat index with its affinity set.

    ``rows`` restricts to a subset of observation indices i (all dimensions of
    each), which makes the reduction additive over disjoint row blocks.
    """
    p = aff.p
    if rows is None:
        flat_rows = np.arange(aff.n * p, dtype=np.int64)
    else:
        rows = np.asarray(rows, dtype=np.int64)
        flat_rows = (rows[:, None] * p + np.arange(p, dtype=np.int64)[None, :]).reshape(-1)

    omega = np.zeros((p, p))
    var_acc = np.zeros((p, p))
    for flat in flat_rows:
        cols = aff.members(int(flat))
        vals = kernel(np.full(cols.shape, flat, dtype=np.int64), cols)
        if np.any(np.isnan(vals)):
            bad = cols[np.isnan(vals)][0]
            raise MissingPairError((unflatten(int(flat), p), unflatten(int(bad), p)))
        d = flat % p
        dprime = cols % p
        np.add.at(omega[d], dprime, vals)
        if kernel.se_pairs is not None:
            ses = kernel.se_pairs(np.full(cols.shape, flat, dtype=np.int64), cols)
            np.add.at(var_acc[d], dprime, ses**2)

    fro = float(np.linalg.norm(omega))
    asym = float(np.linalg.norm(omega - omega.T) / fro) if fro > 0 else 0.0
    # Independent-term approximation for the MC error: term variances add.
    mc_se = np.sqrt(var_acc) if kernel.kind == "monte_carlo" else np.zeros((p, p))
    return OmegaMatrix(omega=omega, frobenius=fro, n_used=aff.n, mc_se=mc_se, asymmetry=asym)


def merge_omegas(parts: Sequence[OmegaMatrix]) -> OmegaMatrix:
    """Merge partial reductions from disjoint row blocks."""
    omega = sum((part.omega for part in parts), start=np.zeros_like(parts[0].omega))
    var = sum((part.mc_se**2 for part in parts), start=np.zeros_like(parts[0].mc_se))
    fro = float(np.linalg.norm(omega))
    asym = float(np.linalg.norm(omega - omega.T) / fro) if fro > 0 else 0.0
    return OmegaMatrix(
        omega=omega,
        frobenius=fro,
        n_used=parts[0].n_used,
        mc_se=np.sqrt(var),
        asymmetry=asym,
    )


def _eig_sym(omega: OmegaMatrix, tol: float):
    m = omega.symmetrized()
    w, v = np.linalg.eigh(m)
    floor = tol * omega.frobenius
    if w.min() <= floor:
        raise NotPositiveDefinite(float(w.min()), floor)
    return w, v


def inverse_sqrt(omega: OmegaMatrix, tol: float = 1e-8) -> np.ndarray:
    """Symmetrize, then invert the matrix square root via eigen-decomposition."""
    w, v = _eig_sym(omega, tol)
    return (v / np.sqrt(w)) @ v.T


def matrix_sqrt(omega: OmegaMatrix, tol: float = 1e-8) -> np.ndarray:
    w, v = _eig_sym(omega, tol)
    return (v * np.sqrt(w)) @ v.T


def whiten(omega: OmegaMatrix, s: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Return M^{-1/2} s for the symmetrized normalization matrix M."""
    s = np.asarray(s, dtype=np.float64)
    root = inverse_sqrt(omega, tol=tol)
    return s @ root.T if s.ndim > 1 else root @ s


def _check_same_shape(replications: Sequence[SampleArray]):
    first = replications[0]
    for arr in replications[1:]:
        if (arr.n, arr.p, arr.model_id) != (first.n, first.p, first.model_id):
            raise ShapeMismatch(
                f"replication ({arr.n},{arr.p},{arr.model_id}) != "
                f"({first.n},{first.p},{first.model_id})"
            )


def stack_replications(replications: Sequence[SampleArray]) -> np.ndarray:
    """Stack replications into an (R, n*p) matrix in flat-index order."""
    _check_same_shape(replications)
    return np.stack([arr.flat for arr in replications])


def empirical_cov_kernel(
    replications: Sequence[SampleArray],
    pairs: Sequence[tuple[int, int]],
) -> CovKernel:
    """Unbiased sample covariance over the requested flat-index pairs.

    The estimate is symmetrized (pair and its swap share one value), and the
    standard error is the sample SE of the centered cross-products.
    """
    if len(replications) < 2:
        raise InsufficientReplications("need at least 2 replications")
    data = stack_replications(replications)
    big_r = data.shape[0]
    centered = data - data.mean(axis=0)

    table: dict[tuple[int, int], tuple[float, float]] = {}
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        if key in table:
            continue
        prods = centered[:, key[0]] * centered[:, key[1]]
        cov = prods.sum() / (big_r - 1)
        se = float(prods.std(ddof=1) / np.sqrt(big_r))
        table[key] = (float(cov), se)

    def _lookup(a: np.ndarray, b: np.ndarray, which: int) -> np.ndarray:
        out = np.full(a.shape, np.nan)
        for idx in range(a.size):
            key = (min(int(a[idx]), int(b[idx])), max(int(a[idx]), int(b[idx])))
            if key in table:
                out[idx] = table[key][which]
        return out

    return CovKernel(
        kind="monte_carlo",
        eval_pairs=lambda a, b: _lookup(a, b, 0),
        se_pairs=lambda a, b: _lookup(a, b, 1),
    )
