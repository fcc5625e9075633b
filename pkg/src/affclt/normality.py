"""Distributional checks of whitened sums against the standard normal.

Pipeline: generate R replications, form the column-sum vector of each, whiten
by the inverse square root of the normalization matrix (analytic kernel when
the model has one, otherwise a pilot Monte Carlo estimate from a disjoint seed
stream), then measure Kolmogorov and 1-Wasserstein distances per dimension and
under random unit-vector projections.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from . import models
from ._rng import NS_PILOT, NS_PROJECTIONS, stream
from .core import (
    AffinityMap,
    OmegaMatrix,
    omega_from_kernel,
    stack_replications,
    whiten,
)
from .diagnostics import empirical_omega
from .errors import InsufficientReplications, ParameterError

__all__ = [
    "ks_distance",
    "w1_distance",
    "whitened_sums",
    "cramer_wold_projections",
    "stein_bound_check",
    "NormalityReport",
    "run_normality",
    "ks_threshold",
    "qq_csv",
]

STEIN_CONST = (2.0 / np.pi) ** 0.25


def ks_threshold(reps: int, level: float = 0.01) -> float:
    """Asymptotic KS critical value; 1.63/sqrt(R) at the 1% level."""
    if level == 0.01:
        c = 1.63
    elif level == 0.05:
        c = 1.36
    else:
        # Kolmogorov asymptotic inverse: c = sqrt(-ln(level/2)/2).
        c = float(np.sqrt(-np.log(level / 2.0) / 2.0))
    return c / np.sqrt(reps)


def _check_samples(samples: np.ndarray, minimum: int) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < minimum:
        raise InsufficientReplications(f"need at least {minimum} samples")
    if not np.all(np.isfinite(samples)):
        raise ParameterError("samples must be finite")
    return samples


def ks_distance(samples: np.ndarray) -> float:
    """sup |F_emp - Phi| with the two-sided step convention at each point."""
    x = np.sort(_check_samples(samples, 10))
    big_r = x.size
    cdf = norm.cdf(x)
    upper = np.arange(1, big_r + 1) / big_r - cdf
    lower = cdf - np.arange(0, big_r) / big_r
    return float(max(upper.max(), lower.max()))


def w1_distance(samples: np.ndarray) -> float:
    """Quantile-coupling 1-Wasserstein distance to the standard normal."""
    x = np.sort(_check_samples(samples, 10))
    big_r = x.size
    q = norm.ppf((np.arange(big_r) + 0.5) / big_r)
    return float(np.mean(np.abs(x - q)))


def whitened_sums(
    spec: models.ModelSpec,
    aff: AffinityMap,
    reps: int,
    master_seed: int,
    omega: Optional[OmegaMatrix] = None,
    pilot_reps: Optional[int] = None,
    tol: float = 1e-8,
) -> tuple[np.ndarray, OmegaMatrix]:
    """(R, p) whitened sum vectors and the normalization matrix used.

    The matrix comes from the analytic kernel when the model has one;
    otherwise from pilot replications drawn on a seed stream disjoint from the
    evaluation replications (reuse would bias the whitening toward the sample).
    """
    if reps < 1:
        raise ParameterError("replication count must be positive")
    if omega is None:
        kernel = models.analytic_kernel(spec)
        if kernel is not None:
            omega = omega_from_kernel(kernel, aff)
        else:
            n_pilot = pilot_reps if pilot_reps is not None else reps
            pilot_seed = int(stream(master_seed, NS_PILOT).integers(0, 2**63 - 1))
            pilot = models.generate_batch(spec, pilot_seed, n_pilot)
            omega = empirical_omega(stack_replications(pilot), aff)
    batch = models.generate_batch(spec, master_seed, reps)
    sums = np.stack([arr.values.sum(axis=0) for arr in batch])
    return whiten(omega, sums, tol=tol), omega


@dataclass
class ProjectionResult:
    direction: np.ndarray
    ks: float
    w1: float

    def to_dict(self) -> dict:
        return {"direction": self.direction.tolist(), "ks": self.ks, "w1": self.w1}


def cramer_wold_projections(
    rows: np.ndarray, n_random: int, master_seed: int
) -> list[ProjectionResult]:
    """Distances of projected samples along random and canonical directions.

    Includes ``n_random`` uniform unit vectors, the canonical basis vectors,
    and the equal-weight direction 1/sqrt(p).
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ParameterError("rows must be an (R, p) matrix")
    p = rows.shape[1]
    if n_random < 1:
        raise ParameterError("need at least one random projection")
    rng = stream(master_seed, NS_PROJECTIONS)
    dirs = []
    for _ in range(n_random):
        v = rng.standard_normal(p)
        dirs.append(v / np.linalg.norm(v))
    dirs.extend(np.eye(p))
    dirs.append(np.full(p, 1.0 / np.sqrt(p)))
    out = []
    for c in dirs:
        proj = rows @ c
        out.append(ProjectionResult(np.asarray(c), ks_distance(proj), w1_distance(proj)))
    return out


def stein_bound_check(samples: np.ndarray) -> tuple[float, float, bool]:
    """Empirical d_K against the bound (2/pi)^(1/4) * sqrt(d_W).

    Returns (d_K, bound, violated) where a violation means d_K exceeds the
    bound by more than the KS sampling band 1.36/sqrt(R).  The inequality
    holds for true distances; with plug-in estimates this is diagnostic only.
    """
    samples = _check_samples(samples, 100)
    d_k = ks_distance(samples)
    d_w = w1_distance(samples)
    bound = STEIN_CONST * np.sqrt(d_w)
    violated = bool(d_k > bound + 1.36 / np.sqrt(samples.size))
    return d_k, float(bound), violated


@dataclass
class NormalityReport:
    """Per-dimension and projected distances with pass flags."""

    reps: int
    marginal_ks: list[float]
    marginal_w1: list[float]
    projections: list[ProjectionResult]
    stein: tuple[float, float, bool]
    ks_gate: float
    bonferroni_gate: float
    passed: bool
    cov_error: float
    omega: OmegaMatrix = field(repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "reps": self.reps,
                "marginal_ks": self.marginal_ks,
                "marginal_w1": self.marginal_w1,
                "projections": [pr.to_dict() for pr in self.projections],
                "stein": {
                    "d_k": self.stein[0],
                    "bound": self.stein[1],
                    "violated": self.stein[2],
                },
                "ks_gate": self.ks_gate,
                "bonferroni_gate": self.bonferroni_gate,
                "passed": self.passed,
                "cov_error": self.cov_error,
                "omega": json.loads(self.omega.to_json()),
            },
            sort_keys=True,
        )


def run_normality(
    spec: models.ModelSpec,
    aff: AffinityMap,
    reps: int,
    master_seed: int,
    n_projections: int = 20,
    level: float = 0.01,
    omega: Optional[OmegaMatrix] = None,
    pilot_reps: Optional[int] = None,
) -> NormalityReport:
    """Full normality check: marginals, projections, Stein bound, pass flags.

    The headline gate is KS < 1.63/sqrt(R) (1% level) per marginal; the joint
    pass additionally Bonferroni-corrects across the J + p + 1 projection
    tests.
    """
    rows, omega_used = whitened_sums(
        spec, aff, reps, master_seed, omega=omega, pilot_reps=pilot_reps
    )
    p = rows.shape[1]
    marginal_ks = [ks_distance(rows[:, d]) for d in range(p)]
    marginal_w1 = [w1_distance(rows[:, d]) for d in range(p)]
    projections = cramer_wold_projections(rows, n_projections, master_seed)
    stein = stein_bound_check(rows[:, 0])
    gate = ks_threshold(reps, level)
    n_tests = len(projections)
    bonferroni_gate = ks_threshold(reps, level / n_tests)
    cov_error = float(np.linalg.norm(np.cov(rows.T).reshape(p, p) - np.eye(p)))
    passed = bool(
        all(k < gate for k in marginal_ks)
        and all(pr.ks < bonferroni_gate for pr in projections)
    )
    return NormalityReport(
        reps=reps,
        marginal_ks=marginal_ks,
        marginal_w1=marginal_w1,
        projections=projections,
        stein=stein,
        ks_gate=gate,
        bonferroni_gate=bonferroni_gate,
        passed=passed,
        cov_error=cov_error,
        omega=omega_used,
    )


def qq_csv(samples: np.ndarray) -> str:
    """Two-column CSV (sorted sample, matching normal quantile) for QQ plots."""
    x = np.sort(_check_samples(samples, 10))
    q = norm.ppf((np.arange(x.size) + 0.5) / x.size)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["sample", "normal_quantile"])
    for xi, qi in zip(x, q):
        writer.writerow([f"{xi:.17g}", f"{qi:.17g}"])
    return buf.getvalue()
