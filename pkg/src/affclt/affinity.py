"""Affinity-set constructors.

Each recipe returns an AffinityMap over flat indices (i, d) -> i*p + d and
records in ``tuning`` the quantities the diagnostics report alongside the
verdicts: the radius or threshold actually used, the maximum set size D_n, the
infection-ball density beta_n, and packing diagnostics.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .core import AffinityMap
from .errors import InsufficientReplications, ParameterError
from .models import GraphTopology, infection_probability

__all__ = [
    "singleton",
    "m_ball",
    "distance_ball",
    "distance_threshold",
    "graph_neighborhood",
    "infection_ball",
    "block_set",
    "hybrid_set",
    "epsilon_schedule",
]


def _from_csr_bool(mat: sp.spmatrix, n: int, p: int, recipe_id: str, tuning: dict) -> AffinityMap:
    """Build an AffinityMap from a boolean relation, forcing reflexivity."""
    mat = sp.csr_matrix(mat, dtype=bool)
    mat = (mat + sp.eye(n * p, dtype=bool, format="csr")).tocsr()
    mat.sort_indices()
    return AffinityMap(
        n,
        p,
        mat.indptr.astype(np.int64),
        mat.indices.astype(np.int64),
        recipe_id=recipe_id,
        tuning=tuning,
    )


def _expand_dims(obs_relation: sp.spmatrix, p: int) -> sp.spmatrix:
    """Lift an n x n observation relation to flat indices: all p dimensions of
    observation j belong to the set of every (i, d) with j related to i."""
    if p == 1:
        return obs_relation
    return sp.kron(obs_relation, np.ones((p, p), dtype=bool), format="csr")


def singleton(n: int, p: int = 1) -> AffinityMap:
    """Each flat index is its own affinity set."""
    m = n * p
    indptr = np.arange(m + 1, dtype=np.int64)
    return AffinityMap(n, p, indptr, np.arange(m, dtype=np.int64), recipe_id="singleton")


def m_ball(n: int, m_radius: int, p: int = 1) -> AffinityMap:
    """Index balls {j : |j - i| <= M} in sequence order, truncated at the ends."""
    if m_radius < 0:
        raise ParameterError("ball radius M must be nonnegative")
    offsets = np.arange(-m_radius, m_radius + 1)
    rel = sp.diags(
        [np.ones(n - abs(off), dtype=bool) for off in offsets],
        offsets,
        shape=(n, n),
        format="csr",
        dtype=bool,
    )
    return _from_csr_bool(
        _expand_dims(rel, p), n, p, "m_ball", {"M": int(m_radius), "D_n": 2 * m_radius + 1}
    )


def epsilon_schedule(n: int, rho0: float = 1.0, dim: int = 1, gamma: float = 0.9) -> float:
    """Covariance cutoff eps_n = 1 / (rho0^dim * n^gamma)."""
    if not 0.0 < gamma <= 1.0:
        raise ParameterError("gamma must lie in (0, 1]")
    return 1.0 / (rho0**dim * n**gamma)


def distance_ball(
    locations: np.ndarray,
    eps: float,
    exponent: float,
    scale: float = 1.0,
    rho0: float = 0.0,
    p: int = 1,
    metric: str = "euclidean",
) -> AffinityMap:
    """Metric balls of radius K(eps) = (scale/eps)^(1/exponent).

    K(eps) is the distance at which a covariance bound scale * dist^-exponent
    drops to eps, so shrinking eps grows the ball.  With ``rho0 > 0`` the bound
    is the shifted form scale * (1 + dist/rho0)^-exponent (the lattice-field
    kernel) and the radius solves that instead: rho0*((scale/eps)^(1/e) - 1).
    """
    if eps <= 0 or exponent <= 0 or scale <= 0:
        raise ParameterError("eps, exponent and scale must be positive")
    radius = (scale / eps) ** (1.0 / exponent)
    if rho0 > 0:
        radius = max(rho0 * (radius - 1.0), 0.0)
    return distance_threshold(
        locations,
        radius,
        p=p,
        metric=metric,
        tuning={"eps": float(eps), "exponent": float(exponent), "K": float(radius)},
    )


def distance_threshold(
    locations: np.ndarray,
    radius: float,
    p: int = 1,
    metric: str = "euclidean",
    tuning: dict | None = None,
) -> AffinityMap:
    """Metric balls of an explicit radius, with a packing-bound diagnostic."""
    locations = np.asarray(locations, dtype=np.float64)
    if locations.ndim == 1:
        locations = locations[:, None]
    n, dim = locations.shape
    p_norm = np.inf if metric == "chebyshev" else 2.0
    tree = cKDTree(locations)
    pairs = tree.query_pairs(radius, p=p_norm, output_type="ndarray")
    rel = sp.csr_matrix(
        (
            np.ones(2 * pairs.shape[0], dtype=bool),
            (
                np.concatenate([pairs[:, 0], pairs[:, 1]]),
                np.concatenate([pairs[:, 1], pairs[:, 0]]),
            ),
        ),
        shape=(n, n),
    )
    min_sep = float(tree.query(locations, k=2)[0][:, 1].min()) if n > 1 else np.inf
    packing = float((radius / min_sep + 1.0) ** dim) if np.isfinite(min_sep) else 1.0
    tuning = dict(tuning or {})
    tuning.update({"K": float(radius), "min_sep": min_sep, "packing_bound": packing})
    amap = _from_csr_bool(_expand_dims(rel, p), n, p, "distance_ball", tuning)
    if amap.max_set_size >= n * p:
        warnings.warn(
            "a distance ball covers the full index set; affinity sets are not o(n)",
            stacklevel=2,
        )
    return amap


def graph_neighborhood(graph: GraphTopology, radius: int = 1, p: int = 1) -> AffinityMap:
    """Closed r-hop neighborhoods on the graph; records D_n = max set size."""
    if radius < 1:
        raise ParameterError("neighborhood radius must be >= 1")
    adj = sp.csr_matrix(graph.adjacency, dtype=bool)
    reach = adj.copy()
    frontier = adj
    for _ in range(radius - 1):
        frontier = (frontier @ adj).astype(bool)
        reach = (reach + frontier).tocsr()
    amap = _from_csr_bool(
        _expand_dims(reach, p), graph.n, p, "graph_neighborhood", {"radius": int(radius)}
    )
    amap.tuning["D_n"] = amap.max_set_size
    return amap


def infection_ball(
    graph: GraphTopology,
    q: float,
    periods: int,
    eps: float,
    reps: int,
    seed: int,
    p: int = 1,
) -> AffinityMap:
    """A_i = {j : single-seed-from-i infection probability of j > eps} plus i.

    Balls are directed (outgoing), so the relation need not be symmetric; the
    normalization-matrix symmetrization downstream absorbs that.
    """
    if not 0.0 < eps:
        raise ParameterError("eps must be positive")
    # The ball boundary is a threshold crossing; demand MC resolution finer
    # than a third of the threshold at the worst case prob = eps.
    worst_se = np.sqrt(min(eps, 0.25) * (1.0 - min(eps, 0.25)) / reps)
    if worst_se >= eps / 3.0:
        need = int(np.ceil(9.0 * min(eps, 0.25) * (1.0 - min(eps, 0.25)) / eps**2)) + 1
        raise InsufficientReplications(
            f"standard error {worst_se:.4g} at the threshold exceeds eps/3; "
            f"need at least R={need} replications"
        )
    n = graph.n
    rows, cols = [], []
    ball_sizes = np.zeros(n, dtype=np.int64)
    for node in range(n):
        prob, _ = infection_probability(graph, q, periods, node, reps, seed)
        members = np.nonzero(prob > eps)[0]
        ball_sizes[node] = members.size
        rows.append(np.full(members.size, node, dtype=np.int64))
        cols.append(members)
    rel = sp.csr_matrix(
        (np.ones(sum(r.size for r in rows), dtype=bool), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    beta = float(ball_sizes.max() / n)
    return _from_csr_bool(
        _expand_dims(rel, p),
        n,
        p,
        "infection_ball",
        {
            "eps": float(eps),
            "q": float(q),
            "T": int(periods),
            "R": int(reps),
            "beta_n": beta,
            "ball_sizes": ball_sizes.tolist(),
        },
    )


def block_set(labels: np.ndarray, p: int = 1) -> AffinityMap:
    """Each index's set is its whole block (labels give a disjoint cover)."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = labels.size
    if n == 0:
        raise ParameterError("empty partition")
    order = np.argsort(labels, kind="stable")
    uniq, starts = np.unique(labels[order], return_index=True)
    bounds = np.append(starts, n)
    rows, cols = [], []
    for b in range(uniq.size):
        members = np.sort(order[bounds[b] : bounds[b + 1]])
        grid_i, grid_j = np.meshgrid(members, members, indexing="ij")
        rows.append(grid_i.ravel())
        cols.append(grid_j.ravel())
    rel = sp.csr_matrix(
        (np.ones(sum(r.size for r in rows), dtype=bool), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return _from_csr_bool(
        _expand_dims(rel, p), n, p, "block_set", {"n_blocks": int(uniq.size)}
    )


def hybrid_set(
    locations: np.ndarray,
    eps: float,
    group_labels: np.ndarray,
    group_affinity: np.ndarray,
    exponent: float,
    scale: float = 1.0,
    p: int = 1,
) -> AffinityMap:
    """Union of a distance ball at threshold eps/2 and high group affinity.

    j joins the set of i when dist(i, j) <= K(eps/2) or when the group
    affinity p[g_i, g_j] >= 1 - eps/2.
    """
    group_affinity = np.asarray(group_affinity, dtype=np.float64)
    if not np.allclose(group_affinity, group_affinity.T):
        raise ParameterError("group affinity matrix must be symmetric")
    if not np.allclose(np.diag(group_affinity), 1.0):
        raise ParameterError("group affinity matrix must have unit diagonal")
    labels = np.asarray(group_labels, dtype=np.int64).ravel()
    ball = distance_ball(locations, eps / 2.0, exponent, scale=scale)
    n = labels.size
    close_groups = group_affinity >= 1.0 - eps / 2.0
    rel_groups = sp.csr_matrix(close_groups[np.ix_(labels, labels)])
    rel_ball = sp.csr_matrix(
        (
            np.ones(ball.indices.size, dtype=bool),
            ball.indices,
            ball.indptr,
        ),
        shape=(n, n),
    )
    rel = (rel_ball + rel_groups).tocsr()
    tuning = {"eps": float(eps), "K": ball.tuning["K"], "group_threshold": 1.0 - eps / 2.0}
    amap = _from_csr_bool(_expand_dims(rel, p), n, p, "hybrid_set", tuning)
    if amap.max_set_size >= n * p:
        warnings.warn("a hybrid affinity set covers the full index set", stacklevel=2)
    return amap
