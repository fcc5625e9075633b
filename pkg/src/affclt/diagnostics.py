"""Monte Carlo estimation of the three covariance-sum conditions.

The three assumption sums are evaluated exactly when the index space is small
enough and by uniform subsampling with unbiased scaling otherwise:

* a1: sum over i of |Z_i| Z_j Z_k with j, k in the set of i.  Exhaustively this
  collapses to sum_i |Z_i| G_i^2 with G_i the affinity-set sum.
* a2: sum over ordered pairs (i, j) of cov(Z_i Z_k, Z_j Z_l), k in set(i), l in
  set(j).  Exhaustively this is the sample variance of T = sum_i Z_i G_i.
* a3: sum over pairs with j outside the set of i of
  E[Z_i Z_j sign(E[Z_i Z_j | Z_j])].  In positive mode (positively associated
  models, sign identically +1) it is Var(S) minus the within-set covariance
  sum; in binned mode the conditional sign is estimated per quantile bin of
  Z_j with ties broken to +1.

Finite-sample verdicts on the o(.) conditions come from a weighted log-log
slope fit across a geometric n-grid.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels, models
from ._rng import NS_SUBSAMPLE, stream
from .core import AffinityMap, OmegaMatrix, SampleArray, omega_from_kernel, stack_replications
from .errors import InsufficientReplications, ParameterError

__all__ = [
    "a1_sum",
    "a2_sum",
    "a3_sum",
    "reduced_pair_condition",
    "reduced_cov_condition",
    "empirical_omega",
    "scaling_verdict",
    "SlopeFit",
    "GridPoint",
    "AssumptionReport",
    "run_assumption_grid",
    "GridCase",
]

DEFAULT_TRIPLE_BUDGET = 10**7
DEFAULT_PAIR_BUDGET = 10**6
DEFAULT_BINS = 8
MIN_REPS_PER_BIN = 50


def _as_matrix(replications) -> np.ndarray:
    """Accept a list of SampleArrays or a ready (R, n*p) matrix."""
    if isinstance(replications, np.ndarray):
        if replications.ndim != 2:
            raise ParameterError("replication matrix must be 2-d (R, n*p)")
        return np.ascontiguousarray(replications, dtype=np.float64)
    return stack_replications(replications)


def _check_aff(values: np.ndarray, aff: AffinityMap):
    if values.shape[1] != aff.n * aff.p:
        raise ParameterError(
            f"value width {values.shape[1]} != affinity index count {aff.n * aff.p}"
        )


# ------------------------------------------------------------- assumption 1


def _sample_triples(
    aff: AffinityMap, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform sample of (i, j in set(i), k in set(i)) triples."""
    sizes = aff.set_sizes()
    weights = (sizes * sizes).astype(np.float64)
    cum = np.cumsum(weights)
    rows = np.searchsorted(cum, rng.random(count) * cum[-1], side="right")
    starts = aff.indptr[rows]
    j = aff.indices[starts + rng.integers(0, sizes[rows])]
    k = aff.indices[starts + rng.integers(0, sizes[rows])]
    return rows.astype(np.int64), j, k


def a1_sum(
    replications,
    aff: AffinityMap,
    budget: int = DEFAULT_TRIPLE_BUDGET,
    master_seed: int = 0,
) -> tuple[float, float]:
    """Within-set weighted triple sum, with its Monte Carlo standard error."""
    if budget < 1:
        raise ParameterError("triple budget must be positive")
    values = _as_matrix(replications)
    _check_aff(values, aff)
    big_r = values.shape[0]
    sizes = aff.set_sizes()
    total = int((sizes.astype(np.int64) ** 2).sum())

    if total <= budget:
        g = kernels.csr_row_sums(values, aff.indptr, aff.indices)
        per_rep = (np.abs(values) * g * g).sum(axis=1)
    else:
        per_rep = np.empty(big_r)
        s = max(1, budget // big_r)
        scale = total / s
        rng = stream(master_seed, NS_SUBSAMPLE, 1)
        for r in range(big_r):
            i_idx, j_idx, k_idx = _sample_triples(aff, s, rng)
            per_rep[r] = scale * kernels.triple_product_sums(
                values[r : r + 1], i_idx, j_idx, k_idx
            )[0]

    est = float(per_rep.mean())
    se = float(per_rep.std(ddof=1) / np.sqrt(big_r)) if big_r > 1 else 0.0
    return est, se


# ------------------------------------------------------------- assumption 2


def _var_of_sum(w: np.ndarray) -> tuple[float, float]:
    """Sample variance of the row sums of w, with a delta-method SE."""
    big_r = w.shape[0]
    if big_r < 2:
        raise InsufficientReplications("variance needs at least 2 replications")
    totals = w.sum(axis=1)
    dev2 = (totals - totals.mean()) ** 2
    est = float(dev2.sum() / (big_r - 1))
    se = float(dev2.std(ddof=1) / np.sqrt(big_r) * big_r / (big_r - 1))
    return est, se


def a2_sum(
    replications,
    aff: AffinityMap,
    budget: int = DEFAULT_PAIR_BUDGET,
    master_seed: int = 0,
) -> tuple[float, float]:
    """Cross-product covariance sum over ordered index pairs, with SE.

    Ordered-pair convention: both (i, j) and (j, i) contribute, so the
    exhaustive value is exactly Var(sum_i Z_i G_i).
    """
    if budget < 1:
        raise ParameterError("pair budget must be positive")
    values = _as_matrix(replications)
    _check_aff(values, aff)
    big_r, m = values.shape
    if big_r < 2:
        raise InsufficientReplications("covariance needs at least 2 replications")
    g = kernels.csr_row_sums(values, aff.indptr, aff.indices)
    w = values * g
    if m * m <= budget:
        return _var_of_sum(w)

    centered = w - w.mean(axis=0)
    rng = stream(master_seed, NS_SUBSAMPLE, 2)
    i_idx = rng.integers(0, m, size=budget, dtype=np.int64)
    j_idx = rng.integers(0, m, size=budget, dtype=np.int64)
    scale = (m * m) / budget
    pair_vals = kernels.pair_cov_values(centered, i_idx, j_idx)
    est = float(scale * pair_vals.sum())
    se_sub = float(scale * pair_vals.std(ddof=1) * np.sqrt(budget))
    # Replication component: per-replication aggregates of the sampled pairs.
    q = np.zeros(big_r)
    # keep the (R, chunk) fancy-indexed temporaries around 128 MB
    chunk = max(1024, (1 << 24) // big_r)
    for lo in range(0, budget, chunk):
        sl = slice(lo, min(lo + chunk, budget))
        q += np.einsum("rs,rs->r", centered[:, i_idx[sl]], centered[:, j_idx[sl]])
    q *= scale
    se_rep = float(q.std(ddof=1) / np.sqrt(big_r) * big_r / (big_r - 1))
    return est, float(np.hypot(se_sub, se_rep))


def reduced_pair_condition(replications) -> tuple[float, float]:
    """Singleton-set reduction of a2: sum_{i,j} cov(Z_i^2, Z_j^2) = Var(sum Z_i^2)."""
    values = _as_matrix(replications)
    return _var_of_sum(values * values)


# ------------------------------------------------------------- assumption 3


def _inside_cov_terms(values: np.ndarray, aff: AffinityMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-replication (total-sum deviation^2, within-set cross product sum)."""
    centered = values - values.mean(axis=0)
    g_cent = kernels.csr_row_sums(centered, aff.indptr, aff.indices)
    s_dev = centered.sum(axis=1)
    inner = np.einsum("rm,rm->r", centered, g_cent)
    return s_dev * s_dev, inner


def _positive_a3(values: np.ndarray, aff: AffinityMap) -> tuple[float, float]:
    big_r = values.shape[0]
    if big_r < 2:
        raise InsufficientReplications("covariance needs at least 2 replications")
    sq, inner = _inside_cov_terms(values, aff)
    u = sq - inner
    est = float(u.sum() / (big_r - 1))
    se = float(u.std(ddof=1) / np.sqrt(big_r) * big_r / (big_r - 1))
    return est, se


def _quantile_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Per-column quantile bin labels across replications (ranks * B // R)."""
    big_r = values.shape[0]
    ranks = np.argsort(np.argsort(values, axis=0, kind="stable"), axis=0, kind="stable")
    return (ranks * n_bins // big_r).astype(np.int64)


def _outside_pairs_exhaustive(aff: AffinityMap) -> tuple[np.ndarray, np.ndarray]:
    rel = aff.contains_matrix()
    i_idx, j_idx = np.nonzero(~rel)
    return i_idx.astype(np.int64), j_idx.astype(np.int64)


def _sample_outside_pairs(
    aff: AffinityMap, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform rejection sample of ordered pairs with j outside the set of i."""
    m = aff.n * aff.p
    out_i = np.empty(count, dtype=np.int64)
    out_j = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        need = count - filled
        cand_i = rng.integers(0, m, size=need + 16, dtype=np.int64)
        cand_j = rng.integers(0, m, size=need + 16, dtype=np.int64)
        starts = aff.indptr[cand_i]
        stops = aff.indptr[cand_i + 1]
        inside = np.zeros(cand_i.size, dtype=bool)
        for t in range(cand_i.size):
            row = aff.indices[starts[t] : stops[t]]
            loc = np.searchsorted(row, cand_j[t])
            inside[t] = loc < row.size and row[loc] == cand_j[t]
        keep_i = cand_i[~inside][:need]
        keep_j = cand_j[~inside][:need]
        out_i[filled : filled + keep_i.size] = keep_i
        out_j[filled : filled + keep_j.size] = keep_j
        filled += keep_i.size
    return out_i, out_j


def _binned_a3(
    values: np.ndarray,
    aff: AffinityMap,
    pair_budget: int,
    n_bins: int,
    master_seed: int,
) -> tuple[float, float]:
    big_r = values.shape[0]
    if big_r < MIN_REPS_PER_BIN * n_bins:
        raise InsufficientReplications(
            f"binned sign estimation needs R >= {MIN_REPS_PER_BIN * n_bins} "
            f"replications for B={n_bins} bins; got {big_r}"
        )
    m = values.shape[1]
    n_outside = m * m - aff.total_members
    if n_outside == 0:
        return 0.0, 0.0
    bins = _quantile_bins(values, n_bins)
    if n_outside <= pair_budget:
        i_idx, j_idx = _outside_pairs_exhaustive(aff)
        stats = kernels.binned_sign_pair_stats(values, bins, i_idx, j_idx, n_bins)
        est = float(stats.sum())
        # Replication error via disjoint replication batches (each batch must
        # keep enough replications per bin for a stable sign estimate).
        n_batches = min(8, big_r // (MIN_REPS_PER_BIN * n_bins))
        if n_batches >= 2:
            batch_est = np.empty(n_batches)
            edges = np.linspace(0, big_r, n_batches + 1, dtype=int)
            for b in range(n_batches):
                sub = values[edges[b] : edges[b + 1]]
                sub_bins = _quantile_bins(sub, n_bins)
                batch_est[b] = kernels.binned_sign_pair_stats(
                    sub, sub_bins, i_idx, j_idx, n_bins
                ).sum()
            se = float(batch_est.std(ddof=1) / np.sqrt(n_batches))
        else:
            se = 0.0
        return est, se
    rng = stream(master_seed, NS_SUBSAMPLE, 3)
    i_idx, j_idx = _sample_outside_pairs(aff, pair_budget, rng)
    stats = kernels.binned_sign_pair_stats(values, bins, i_idx, j_idx, n_bins)
    scale = n_outside / pair_budget
    est = float(scale * stats.sum())
    se = float(n_outside * stats.std(ddof=1) / np.sqrt(pair_budget))
    return est, se


def a3_sum(
    replications,
    aff: AffinityMap,
    mode: str = "auto",
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    n_bins: int = DEFAULT_BINS,
    master_seed: int = 0,
) -> tuple[float, float]:
    """Outside-set sign-weighted covariance sum, with SE.

    ``mode="positive"`` uses sign identically +1 (valid for positively
    associated models), so the sum is Var(S) minus the within-set covariance
    sum.  ``mode="binned"`` estimates the conditional sign by quantile-binning
    Z_j.  ``mode="auto"`` picks positive when every replication carries the
    positively_associated flag, binned otherwise.
    """
    values = _as_matrix(replications)
    _check_aff(values, aff)
    if mode == "auto":
        if isinstance(replications, np.ndarray):
            mode = "binned"
        else:
            mode = (
                "positive"
                if all(arr.positively_associated for arr in replications)
                else "binned"
            )
    if mode == "positive":
        return _positive_a3(values, aff)
    if mode == "binned":
        return _binned_a3(values, aff, pair_budget, n_bins, master_seed)
    raise ParameterError(f"unknown a3 mode {mode!r}")


def reduced_cov_condition(replications) -> tuple[float, float]:
    """Singleton-set reduction of a3 (positive mode): sum_{i != j} cov(Z_i, Z_j)."""
    values = _as_matrix(replications)
    from .affinity import singleton

    return _positive_a3(values, singleton(values.shape[1], 1))


# --------------------------------------------------------- empirical omega


def empirical_omega(replications, aff: AffinityMap) -> OmegaMatrix:
    """Normalization matrix from sample covariances of the replications."""
    values = _as_matrix(replications)
    _check_aff(values, aff)
    big_r = values.shape[0]
    if big_r < 2:
        raise InsufficientReplications("empirical omega needs at least 2 replications")
    p = aff.p
    centered = values - values.mean(axis=0)
    omega = np.zeros((p, p))
    var_acc = np.zeros((p, p))
    col_dims = np.arange(aff.n * p, dtype=np.int64) % p
    for dprime in range(p):
        mask = col_dims[aff.indices] == dprime
        sub_indices = aff.indices[mask]
        # Rows are never empty (reflexivity), so reduceat segments are valid.
        counts = np.add.reduceat(mask, aff.indptr[:-1])
        sub_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        g = kernels.csr_row_sums(centered, sub_indptr, sub_indices)
        for d in range(p):
            cols = np.nonzero(col_dims == d)[0]
            per_rep = np.einsum("rm,rm->r", centered[:, cols], g[:, cols])
            omega[d, dprime] = per_rep.sum() / (big_r - 1)
            var_acc[d, dprime] = (per_rep.std(ddof=1) / np.sqrt(big_r) * big_r / (big_r - 1)) ** 2
    fro = float(np.linalg.norm(omega))
    asym = float(np.linalg.norm(omega - omega.T) / fro) if fro > 0 else 0.0
    return OmegaMatrix(
        omega=omega, frobenius=fro, n_used=aff.n, mc_se=np.sqrt(var_acc), asymmetry=asym
    )


# --------------------------------------------------------- scaling verdicts


@dataclass
class SlopeFit:
    """Weighted log-log fit of a ratio magnitude against n."""

    slope: float
    se: float
    verdict: str
    tau: float
    magnitudes: list[float]
    floored: list[bool]
    sign_flagged: bool = False

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "se": self.se,
            "verdict": self.verdict,
            "tau": self.tau,
            "magnitudes": self.magnitudes,
            "floored": self.floored,
            "sign_flagged": self.sign_flagged,
        }


def scaling_verdict(
    ns: Sequence[int],
    estimates: Sequence[float],
    ses: Sequence[float],
    tau: float = 0.02,
    require_grid: bool = True,
) -> SlopeFit:
    """PASS / FAIL / INCONCLUSIVE from a weighted log-log slope.

    The regression is of log(magnitude) on log(n), weighted by inverse squared
    relative SEs.  Precision floor: when an estimate is statistically
    indistinguishable from zero (|est| < 2 SE) its magnitude is replaced by
    its SE — a point known only to be below its noise floor should count as
    "at most this small" rather than contribute a noise-dominated level.
    PASS requires slope + 2 SE(slope) < -tau; FAIL requires
    slope - 2 SE(slope) > +tau.
    """
    ns = np.asarray(ns, dtype=np.float64)
    est = np.asarray(estimates, dtype=np.float64)
    ses_arr = np.asarray(ses, dtype=np.float64)
    if require_grid and ns.size < 5:
        raise ParameterError("scaling verdict needs a grid of at least 5 points")
    if np.any(ses_arr < 0):
        raise ParameterError("standard errors must be nonnegative")

    sign_flagged = bool(np.all(est < 0))
    mag = np.abs(est)
    floored = mag < 2.0 * ses_arr
    mag = np.where(floored, np.maximum(ses_arr, np.finfo(float).tiny), mag)
    if np.any(mag <= 0):
        raise ParameterError("cannot fit a log-log slope through zero magnitudes")

    # A floored magnitude is itself a standard error, whose relative sampling
    # error is about 1/sqrt(2R) — at most ~10% for the replication counts in
    # use.  Giving floored points 10% precision keeps noise-floor points
    # informative without overstating them.
    rel = np.where(floored, 0.1, ses_arr / mag)
    rel = np.clip(rel, 1e-3, None)
    weights = 1.0 / (rel * rel)
    x = np.log(ns)
    y = np.log(mag)
    wsum = weights.sum()
    xbar = (weights * x).sum() / wsum
    ybar = (weights * y).sum() / wsum
    sxx = (weights * (x - xbar) ** 2).sum()
    slope = float((weights * (x - xbar) * (y - ybar)).sum() / sxx)
    # Treating relative SEs as the log-scale noise sd, the WLS slope variance
    # is 1/sxx.
    slope_se = float(np.sqrt(1.0 / sxx))

    if slope + 2.0 * slope_se < -tau:
        verdict = "PASS"
    elif slope - 2.0 * slope_se > tau:
        verdict = "FAIL"
    else:
        verdict = "INCONCLUSIVE"
    return SlopeFit(
        slope=slope,
        se=slope_se,
        verdict=verdict,
        tau=tau,
        magnitudes=mag.tolist(),
        floored=floored.tolist(),
        sign_flagged=sign_flagged,
    )


# ------------------------------------------------------------- grid runner


@dataclass
class GridPoint:
    """Assumption sums and the normalization scale at one array size."""

    n: int
    reps: int
    a1: float
    a1_se: float
    a2: float
    a2_se: float
    a3: float
    a3_se: float
    omega_frob: float

    @property
    def r1(self) -> float:
        return self.a1 / self.omega_frob**1.5

    @property
    def r2(self) -> float:
        return self.a2 / self.omega_frob**2

    @property
    def r3(self) -> float:
        return self.a3 / self.omega_frob

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "n", "reps", "a1", "a1_se", "a2", "a2_se", "a3", "a3_se", "omega_frob"
        )}
        d.update({"r1": self.r1, "r2": self.r2, "r3": self.r3})
        return d


@dataclass
class AssumptionReport:
    """Grid results plus per-assumption scaling verdicts."""

    points: list[GridPoint]
    slopes: dict[str, SlopeFit]
    omega_growth: SlopeFit
    tau: float
    a3_mode: str

    def verdicts(self) -> dict[str, str]:
        return {name: fit.verdict for name, fit in self.slopes.items()}

    def to_json(self) -> str:
        return json.dumps(
            {
                "points": [pt.to_dict() for pt in self.points],
                "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
                "omega_growth": self.omega_growth.to_dict(),
                "tau": self.tau,
                "a3_mode": self.a3_mode,
            },
            sort_keys=True,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["n", "assumption", "estimate", "se", "ratio", "omega_frob"])
        for pt in self.points:
            for name, est, se, ratio in (
                ("a1", pt.a1, pt.a1_se, pt.r1),
                ("a2", pt.a2, pt.a2_se, pt.r2),
                ("a3", pt.a3, pt.a3_se, pt.r3),
            ):
                writer.writerow([pt.n, name, est, se, ratio, pt.omega_frob])
        return buf.getvalue()

    def loglog_series(self, which: str) -> np.ndarray:
        """Two-column (log n, log |ratio|) series for external plotting."""
        key = {"a1": "r1", "a2": "r2", "a3": "r3"}[which]
        fit = self.slopes[which]
        return np.column_stack(
            [np.log([pt.n for pt in self.points]), np.log(fit.magnitudes)]
        )


@dataclass
class GridCase:
    """One grid evaluation problem: model and affinity recipe as functions of n."""

    spec_fn: Callable[[int], models.ModelSpec]
    aff_fn: Callable[[models.ModelSpec], AffinityMap]
    reps_fn: Callable[[int], int] = lambda n: 256
    a3_mode: str = "auto"


def _ratio_se(est_se: float, omega: float, power: float, est: float, omega_se: float) -> float:
    """First-order SE of est / omega^power with omega uncertainty folded in."""
    if omega <= 0:
        return np.inf
    term1 = est_se / omega**power
    term2 = abs(est) * power * omega_se / omega ** (power + 1.0)
    return float(np.hypot(term1, term2))


def run_assumption_grid(
    case: GridCase,
    ns: Sequence[int],
    master_seed: int = 0,
    tau: float = 0.02,
    triple_budget: int = DEFAULT_TRIPLE_BUDGET,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    n_bins: int = DEFAULT_BINS,
) -> AssumptionReport:
    """Evaluate the three assumption sums across an n-grid and fit slopes."""
    ns = sorted(int(n) for n in ns)
    if len(ns) < 5:
        raise ParameterError("assumption grid needs at least 5 sizes")
    points: list[GridPoint] = []
    ratio_ses = {"a1": [], "a2": [], "a3": []}
    a3_mode_used = case.a3_mode
    for n in ns:
        spec = case.spec_fn(n)
        aff = case.aff_fn(spec)
        reps = int(case.reps_fn(n))
        _, values = models.generate_matrix(spec, master_seed, reps)
        kernel = models.analytic_kernel(spec)
        if kernel is not None:
            omega = omega_from_kernel(kernel, aff)
        else:
            omega = empirical_omega(values, aff)
        omega_se = float(np.linalg.norm(omega.mc_se))

        est1, se1 = a1_sum(values, aff, budget=triple_budget, master_seed=master_seed)
        est2, se2 = a2_sum(values, aff, budget=pair_budget, master_seed=master_seed)
        mode = case.a3_mode
        if mode == "auto":
            mode = "positive" if models.positively_associated(spec) else "binned"
        a3_mode_used = mode
        est3, se3 = a3_sum(
            values,
            aff,
            mode=mode,
            pair_budget=pair_budget,
            n_bins=n_bins,
            master_seed=master_seed,
        )
        pt = GridPoint(
            n=n,
            reps=reps,
            a1=est1,
            a1_se=se1,
            a2=est2,
            a2_se=se2,
            a3=est3,
            a3_se=se3,
            omega_frob=omega.frobenius,
        )
        points.append(pt)
        ratio_ses["a1"].append(_ratio_se(se1, omega.frobenius, 1.5, est1, omega_se))
        ratio_ses["a2"].append(_ratio_se(se2, omega.frobenius, 2.0, est2, omega_se))
        ratio_ses["a3"].append(_ratio_se(se3, omega.frobenius, 1.0, est3, omega_se))

    slopes = {
        "a1": scaling_verdict(ns, [pt.r1 for pt in points], ratio_ses["a1"], tau=tau),
        "a2": scaling_verdict(ns, [pt.r2 for pt in points], ratio_ses["a2"], tau=tau),
        "a3": scaling_verdict(ns, [pt.r3 for pt in points], ratio_ses["a3"], tau=tau),
    }
    omega_growth = scaling_verdict(
        ns,
        [pt.omega_frob for pt in points],
        [0.0] * len(ns),
        tau=tau,
    )
    return AssumptionReport(
        points=points,
        slopes=slopes,
        omega_growth=omega_growth,
        tau=tau,
        a3_mode=a3_mode_used,
    )
