"""Applied estimators: exposure-binned Horvitz-Thompson treatment effects,
the diffusion-parameter moment estimator, and socio-economic covariance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._rng import NS_ASSIGNMENT, replication_seeds, stream
from .core import CovKernel
from .errors import InsufficientReplications, ParameterError
from .models import GraphTopology
from .models.diffusion import sir_outcome

__all__ = [
    "ExposureDesign",
    "exposure_map",
    "bin_real_exposure",
    "exposure_probabilities",
    "HTEstimate",
    "ht_estimate",
    "q_hat_star",
    "q_hat_mc",
    "QHatResult",
    "socio_distance",
    "SocioCovSpec",
    "socio_cov_kernel",
    "EXPOSURE_LEVELS",
]

# Four-level exposure labels: d1 treated/isolated-from-treatment, d2 treated
# with treated neighbors, d3 untreated with treated neighbors, d4 neither.
EXPOSURE_LEVELS = (1, 2, 3, 4)


@dataclass
class ExposureDesign:
    """Bernoulli treatment design with a neighborhood exposure function."""

    graph: GraphTopology
    pi_t: float
    real_exposure: Optional[Callable[[np.ndarray, GraphTopology], np.ndarray]] = None
    delta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.pi_t < 1.0:
            raise ParameterError("treatment probability must lie in (0, 1)")
        if self.real_exposure is not None and self.delta <= 0:
            raise ParameterError("real-exposure mode needs a positive bin width delta")


def _treated_neighbor_counts(graph: GraphTopology, assignments: np.ndarray) -> np.ndarray:
    """Rows are assignments; returns per-row treated-neighbor counts."""
    return np.asarray(assignments @ graph.adjacency.T)


def _four_level_labels(graph: GraphTopology, assignments: np.ndarray) -> np.ndarray:
    t = assignments
    nbr = _treated_neighbor_counts(graph, t) > 0
    labels = np.full(t.shape, 4, dtype=np.int64)
    labels[(t == 1) & ~nbr] = 1
    labels[(t == 1) & nbr] = 2
    labels[(t == 0) & nbr] = 3
    return labels


def bin_real_exposure(exposure: np.ndarray, delta: float) -> np.ndarray:
    """Half-open delta-bins [k*delta, (k+1)*delta); deterministic at edges."""
    if delta <= 0:
        raise ParameterError("bin width must be positive")
    return np.floor(np.asarray(exposure, dtype=np.float64) / delta).astype(np.int64)


def exposure_map(design: ExposureDesign, assignment: np.ndarray) -> np.ndarray:
    """Per-node exposure labels for one treatment assignment."""
    assignment = np.asarray(assignment, dtype=np.int64).ravel()
    if assignment.size != design.graph.n:
        raise ParameterError("assignment length must equal the node count")
    if design.real_exposure is not None:
        return bin_real_exposure(design.real_exposure(assignment, design.graph), design.delta)
    return _four_level_labels(design.graph, assignment[None, :])[0]


def _all_assignments(n: int) -> np.ndarray:
    rows = np.arange(2**n, dtype=np.uint64)[:, None]
    bits = (rows >> np.arange(n, dtype=np.uint64)[None, :]) & 1
    return bits.astype(np.int64)


def exposure_probabilities(
    design: ExposureDesign,
    reps: int = 100_000,
    seed: int = 0,
    se_gate: float = 0.02,
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Per-node probabilities pi_i(d) for each exposure level, with SEs.

    Exact enumeration over all 2^n assignments when n <= 20; Monte Carlo
    otherwise, refused when any estimated positive probability has a relative
    SE above ``se_gate``.
    """
    graph = design.graph
    n = graph.n
    if design.real_exposure is not None:
        levels = None  # determined from observed bins
    else:
        levels = EXPOSURE_LEVELS

    def labels_of(assignments: np.ndarray) -> np.ndarray:
        if design.real_exposure is not None:
            out = np.empty(assignments.shape, dtype=np.int64)
            for r in range(assignments.shape[0]):
                out[r] = bin_real_exposure(
                    design.real_exposure(assignments[r], graph), design.delta
                )
            return out
        return _four_level_labels(graph, assignments)

    if n <= 20:
        assignments = _all_assignments(n)
        k = assignments.sum(axis=1)
        weights = design.pi_t**k * (1.0 - design.pi_t) ** (n - k)
        labels = labels_of(assignments)
        found = levels if levels is not None else np.unique(labels)
        probs = {
            int(d): (weights[:, None] * (labels == d)).sum(axis=0) for d in found
        }
        ses = {int(d): np.zeros(n) for d in found}
        return probs, ses

    rng = stream(seed, NS_ASSIGNMENT)
    assignments = (rng.random((reps, n)) < design.pi_t).astype(np.int64)
    labels = labels_of(assignments)
    found = levels if levels is not None else np.unique(labels)
    probs, ses = {}, {}
    for d in found:
        p_hat = (labels == d).mean(axis=0)
        se = np.sqrt(p_hat * (1.0 - p_hat) / reps)
        probs[int(d)] = p_hat
        ses[int(d)] = se
        positive = p_hat > 0
        if np.any(se[positive] >= se_gate * p_hat[positive]):
            worst = float((se[positive] / p_hat[positive]).max())
            raise InsufficientReplications(
                f"exposure probability relative SE {worst:.3f} exceeds the "
                f"{se_gate:.3f} gate; increase replications"
            )
    return probs, ses


@dataclass
class HTEstimate:
    """Inverse-probability-weighted exposure contrast."""

    value: float
    level_high: int
    level_low: int
    n_used: int
    excluded: list[int]

    def to_json(self) -> str:
        return json.dumps(
            {
                "estimand": f"tau(d{self.level_high}, d{self.level_low})",
                "value": self.value,
                "n_used": self.n_used,
                "excluded": self.excluded,
            },
            sort_keys=True,
        )


def ht_estimate(
    design: ExposureDesign,
    probs: dict[int, np.ndarray],
    assignment: np.ndarray,
    outcomes: np.ndarray,
    levels: tuple[int, int],
    mode: str = "flag",
) -> HTEstimate:
    """Horvitz-Thompson contrast (1/n) sum 1{D_i=d_k} y_i / pi_i(d_k) minus
    the same at d_l.

    Units with zero probability at either level violate positivity; in
    ``flag`` mode they are excluded (the estimate covers the positive
    subpopulation), in ``strict`` mode that is an error.
    """
    d_hi, d_lo = int(levels[0]), int(levels[1])
    for d in (d_hi, d_lo):
        if d not in probs:
            raise ParameterError(f"no exposure probabilities for level {d}")
    labels = exposure_map(design, assignment)
    outcomes = np.asarray(outcomes, dtype=np.float64).ravel()
    if outcomes.size != labels.size:
        raise ParameterError("outcome length must equal the node count")
    pi_hi = np.asarray(probs[d_hi], dtype=np.float64)
    pi_lo = np.asarray(probs[d_lo], dtype=np.float64)
    bad = (pi_hi <= 0) | (pi_lo <= 0)
    if np.any(bad):
        if mode == "strict":
            raise ParameterError(
                f"positivity violated at units {np.nonzero(bad)[0].tolist()}"
            )
        if mode != "flag":
            raise ParameterError(f"unknown positivity mode {mode!r}")
    keep = ~bad
    n_used = int(keep.sum())
    if n_used == 0:
        return HTEstimate(0.0, d_hi, d_lo, 0, np.nonzero(bad)[0].tolist())
    term_hi = np.where(labels[keep] == d_hi, outcomes[keep] / pi_hi[keep], 0.0)
    term_lo = np.where(labels[keep] == d_lo, outcomes[keep] / pi_lo[keep], 0.0)
    value = float((term_hi - term_lo).sum() / n_used)
    return HTEstimate(value, d_hi, d_lo, n_used, np.nonzero(bad)[0].tolist())


# ------------------------------------------------------- diffusion estimator


def q_hat_star(infected_leaves: int, leaves: int) -> float:
    """Closed-form moment solution on the star with a seeded center and T=1."""
    if leaves < 1:
        raise ParameterError("star must have at least one leaf")
    if not 0 <= infected_leaves <= leaves:
        raise ParameterError("infected leaf count out of range")
    return infected_leaves / leaves


@dataclass
class QHatResult:
    q_hat: float
    grid: np.ndarray
    psi: np.ndarray
    at_boundary: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "q_hat": self.q_hat,
                "grid": self.grid.tolist(),
                "psi": self.psi.tolist(),
                "at_boundary": self.at_boundary,
            },
            sort_keys=True,
        )


def q_hat_mc(
    graph: GraphTopology,
    seeds: np.ndarray,
    periods: int,
    outcomes: np.ndarray,
    q_grid: Sequence[float],
    reps: int,
    seed: int,
) -> QHatResult:
    """Root of the moment curve Psi(q) = sum_i (X_i - p_hat_i(q)).

    The infection probabilities p_hat_i(q) are Monte Carlo estimates sharing
    one set of per-edge uniforms across all grid points (common random
    numbers), which makes the curve monotone non-increasing in q path by path.
    The root is the sign change of the curve, located by linear interpolation;
    with no sign change the nearer grid boundary is reported and flagged.
    """
    grid = np.asarray(sorted(float(q) for q in q_grid))
    if grid.size < 9:
        raise ParameterError("q grid needs at least 9 points")
    if grid.min() <= 0 or grid.max() >= 1:
        raise ParameterError("q grid must lie inside (0, 1)")
    outcomes = np.asarray(outcomes, dtype=np.float64).ravel()
    seeds = np.asarray(seeds, dtype=np.int64)
    rep_seeds = replication_seeds(seed, reps, 31)
    x_total = outcomes.sum()
    psi = np.empty(grid.size)
    for gi, q in enumerate(grid):
        counts = 0.0
        for rep_seed in rep_seeds:
            counts += sir_outcome(graph, seeds, float(q), periods, int(rep_seed)).infected.sum()
        psi[gi] = x_total - counts / reps

    sign = np.sign(psi)
    crossings = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if psi[0] <= 0:
        return QHatResult(float(grid[0]), grid, psi, at_boundary=True)
    if crossings.size == 0:
        return QHatResult(float(grid[-1]), grid, psi, at_boundary=True)
    k = int(crossings[0])
    y0, y1 = psi[k], psi[k + 1]
    if y0 == y1:
        q_hat = float(grid[k])
    else:
        q_hat = float(grid[k] + (grid[k + 1] - grid[k]) * (y0 / (y0 - y1)))
    return QHatResult(q_hat, grid, psi, at_boundary=False)


# ------------------------------------------------ socio-economic covariance


def socio_distance(comp_i: np.ndarray, comp_j: np.ndarray) -> float:
    """Euclidean distance between group-composition vectors."""
    comp_i = np.asarray(comp_i, dtype=np.float64).ravel()
    comp_j = np.asarray(comp_j, dtype=np.float64).ravel()
    if comp_i.size != comp_j.size:
        raise ParameterError("composition vectors must have equal length")
    return float(np.linalg.norm(comp_i - comp_j))


@dataclass
class SocioCovSpec:
    """Spatial kernel damped by pairwise group interaction probabilities."""

    locations: np.ndarray
    group_labels: np.ndarray
    interaction: np.ndarray  # symmetric, unit diagonal, entries in [0, 1]
    sigma2: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=np.float64)
        if self.locations.ndim == 1:
            self.locations = self.locations[:, None]
        self.group_labels = np.asarray(self.group_labels, dtype=np.int64).ravel()
        self.interaction = np.asarray(self.interaction, dtype=np.float64)
        if self.group_labels.size != self.locations.shape[0]:
            raise ParameterError("one group label per location required")
        if not np.allclose(self.interaction, self.interaction.T):
            raise ParameterError("interaction matrix must be symmetric")
        if not np.allclose(np.diag(self.interaction), 1.0):
            raise ParameterError("interaction matrix must have unit diagonal")
        if self.interaction.min() < 0 or self.interaction.max() > 1:
            raise ParameterError("interaction probabilities must lie in [0, 1]")
        if self.sigma2 <= 0 or self.length_scale <= 0:
            raise ParameterError("sigma2 and length_scale must be positive")


def socio_cov_kernel(spec: SocioCovSpec, psd_check_limit: int = 2048) -> tuple[CovKernel, dict]:
    """cov(i, j) = sigma2 * exp(-dist/length_scale) * p[g_i, g_j].

    The product construction is not positive semidefinite for arbitrary
    interaction matrices, so the minimum eigenvalue is computed (up to
    ``psd_check_limit`` nodes) and reported rather than enforced — the kernel
    can still define affinity sets and diagnostics.
    """
    pts = spec.locations
    labels = spec.group_labels
    n = pts.shape[0]

    def eval_pairs(a, b):
        dist = np.linalg.norm(pts[a] - pts[b], axis=1)
        spatial = spec.sigma2 * np.exp(-dist / spec.length_scale)
        return spatial * spec.interaction[labels[a], labels[b]]

    report = {"psd_checked": False, "psd": None, "min_eigenvalue": None}
    if n <= psd_check_limit:
        idx = np.arange(n, dtype=np.int64)
        grid_a, grid_b = np.meshgrid(idx, idx, indexing="ij")
        cov = eval_pairs(grid_a.ravel(), grid_b.ravel()).reshape(n, n)
        eigs = np.linalg.eigvalsh(cov)
        min_eig = float(eigs.min())
        report = {
            "psd_checked": True,
            "psd": bool(min_eig >= -1e-10 * max(1.0, float(eigs.max()))),
            "min_eigenvalue": min_eig,
        }
    return CovKernel(kind="analytic", eval_pairs=eval_pairs), report
