"""Network diffusion generators: edge-shock sums and discrete-time SIR."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .. import kernels
from .._rng import NS_EDGE_UNIFORMS, NS_MODEL, NS_SEEDSET, replication_seeds, stream
from ..core import CovKernel
from ..errors import ParameterError
from .graphs import GraphTopology, sbm_graph
from .timeseries import draw_innovations


# --------------------------------------------------------------- edge shock


def _incidence(graph: GraphTopology) -> sp.csr_matrix:
    """Node-by-edge incidence matrix (each column has two unit entries)."""
    m = graph.n_edges
    rows = graph.edges.ravel()
    cols = np.repeat(np.arange(m, dtype=np.int64), 2)
    return sp.csr_matrix((np.ones(2 * m), (rows, cols)), shape=(graph.n, m))


def edge_shock_values(params: dict, n: int, seeds: np.ndarray) -> np.ndarray:
    """(R, n) draws of Z_i = sum of one i.i.d. shock per incident edge."""
    graph: GraphTopology = params["graph"]
    if graph.n != n:
        raise ParameterError("graph node count does not match n")
    if graph.n_edges == 0:
        raise ParameterError("edge-shock model needs at least one edge")
    law = params.get("edge_weight_law", "normal")
    inc = _incidence(graph).T.tocsr()  # edge-by-node for right multiplication
    shocks = np.empty((seeds.size, graph.n_edges))
    for r, seed in enumerate(seeds):
        shocks[r] = draw_innovations(stream(int(seed), NS_MODEL), law, graph.n_edges)
    return np.ascontiguousarray(shocks @ inc)


def edge_shock_kernel(params: dict, n: int, p: int = 1) -> CovKernel:
    """cov(Z_i, Z_j) = #shared edges = 1{adjacent}; var(Z_i) = degree(i)."""
    graph: GraphTopology = params["graph"]
    adj = graph.adjacency
    deg = graph.degrees.astype(np.float64)

    def eval_pairs(a, b):
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        b = np.atleast_1d(np.asarray(b, dtype=np.int64))
        out = np.asarray(adj[a, b]).ravel().astype(np.float64)
        same = a == b
        out[same] = deg[a[same]]
        return out

    return CovKernel(kind="analytic", eval_pairs=eval_pairs)


def edge_shock_positive(params: dict) -> bool:
    # Shocks enter every node with weight +1, so all covariances are >= 0.
    return True


# ---------------------------------------------------------------------- SIR


@dataclass(frozen=True)
class DiffusionOutcome:
    """Result of one SIR run: who was ever infected, from which seeds."""

    infected: np.ndarray
    seeds: np.ndarray
    periods: int
    block_labels: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        inf = np.asarray(self.infected, dtype=bool)
        seeds = np.asarray(self.seeds, dtype=np.int64)
        object.__setattr__(self, "infected", inf)
        object.__setattr__(self, "seeds", seeds)
        if seeds.size and not inf[seeds].all():
            raise ParameterError("every seed node must be infected")

    @property
    def values(self) -> np.ndarray:
        return self.infected.astype(np.float64)


def edge_uniforms(graph: GraphTopology, rep_seed: int) -> np.ndarray:
    """One uniform per directed adjacency entry, keyed by the replication seed.

    A transmission attempt along a directed edge can happen at most once (the
    source infects in the single period after it first becomes infected), so a
    single per-directed-edge uniform reproduces the discrete-time SIR law and
    yields the monotone coupling in the seed set: with shared uniforms, adding
    a seed can only add infected nodes.
    """
    indptr, indices = graph.directed_csr()
    return stream(int(rep_seed), NS_EDGE_UNIFORMS).random(indices.size)


def sir_outcome(
    graph: GraphTopology,
    seeds: np.ndarray,
    q: float,
    periods: int,
    rep_seed: int,
    block_labels: np.ndarray | None = None,
) -> DiffusionOutcome:
    """Run one SIR replication from an explicit seed set."""
    if not 0.0 <= q <= 1.0:
        raise ParameterError("transmission probability must lie in [0, 1]")
    seeds = np.asarray(seeds, dtype=np.int64)
    indptr, indices = graph.directed_csr()
    open_mask = edge_uniforms(graph, rep_seed) < q
    infected = kernels.sir_reach(indptr, indices, open_mask, seeds, int(periods))
    return DiffusionOutcome(infected, seeds, int(periods), block_labels)


def _cached_diameter(graph: GraphTopology) -> float:
    diam = getattr(graph, "_diam_cache", None)
    if diam is None:
        diam = graph.diameter()
        graph._diam_cache = diam
    return diam


def gen_sir(params: dict, n: int, rep_seed: int) -> DiffusionOutcome:
    """One SIR replication with a uniformly random seed set of size m."""
    graph: GraphTopology = params["graph"]
    if graph.n != n:
        raise ParameterError("graph node count does not match n")
    m = int(params["m"])
    if not 1 <= m <= n:
        raise ParameterError("seed count must lie in [1, n]")
    q = float(params["q"])
    periods = int(params["T"])
    if params.get("check_diameter", True) and graph.is_connected:
        diam = _cached_diameter(graph)
        if periods < diam:
            warnings.warn(
                f"T={periods} is below the graph diameter {diam:.0f}; "
                "the epidemic may be truncated",
                stacklevel=2,
            )
    seeds = stream(int(rep_seed), NS_SEEDSET).choice(n, size=m, replace=False)
    return sir_outcome(graph, np.sort(seeds), q, periods, rep_seed)


# ----------------------------------------------------------- SBM diffusion

_SBM_CACHE: dict[tuple, tuple[GraphTopology, np.ndarray]] = {}


def sbm_graph_cached(
    n: int, k: int, p_in: float, p_ac: float, graph_seed: int
) -> tuple[GraphTopology, np.ndarray]:
    """The block-model graph is fixed across replications (one draw per
    (n, k, p_in, p_ac, graph_seed)); only the epidemic re-randomizes."""
    key = (int(n), int(k), float(p_in), float(p_ac), int(graph_seed))
    if key not in _SBM_CACHE:
        _SBM_CACHE[key] = sbm_graph(n, k, p_in, p_ac, graph_seed)
    return _SBM_CACHE[key]


def sbm_regime_flags(params: dict, n: int) -> dict:
    """Percolation-regime indicators with configurable constants."""
    k = int(params["k"])
    q = float(params["q"])
    p_in = float(params["p_in"])
    p_ac = float(params["p_ac"])
    c1 = float(params.get("c1", 2.0))
    c2 = float(params.get("c2", 0.1))
    block = n / k
    return {
        "within_percolates": bool(p_in * block * q >= c1 * np.log(block)),
        "across_vanishes": bool(p_ac * n * n * q <= c2),
        "c1": c1,
        "c2": c2,
    }


def gen_sbm_diffusion(
    params: dict, n: int, rep_seed: int, warn_regime: bool = True
) -> tuple[GraphTopology, DiffusionOutcome]:
    """SIR on a fixed stochastic-block-model graph with k/2 random seeds."""
    k = int(params["k"])
    if not 1 <= k <= n:
        raise ParameterError("block count must lie in [1, n]")
    graph, labels = sbm_graph_cached(
        n, k, float(params["p_in"]), float(params["p_ac"]), int(params.get("graph_seed", 0))
    )
    flags = sbm_regime_flags(params, n)
    if warn_regime:
        if not flags["within_percolates"]:
            warnings.warn("within-block percolation condition not met", stacklevel=2)
        if not flags["across_vanishes"]:
            warnings.warn("across-block transmission does not vanish", stacklevel=2)
    m = int(params.get("m", max(1, k // 2)))
    if not 1 <= m <= k:
        raise ParameterError("expected seed count m must lie in [1, k]")
    q = float(params["q"])
    periods = int(params.get("T", n))
    # Each block is seeded independently with probability m/k (one uniformly
    # chosen node), so m seeds appear in expectation.  Independent per-block
    # seeding keeps across-block correlation of infection status nonnegative
    # (coming only from cross-block contagion); drawing a fixed number of
    # seeds globally would add negative seed-competition correlation between
    # blocks instead.
    rng = stream(int(rep_seed), NS_SEEDSET)
    coins = rng.random(k) < m / k
    picks = rng.integers(0, n, size=k)
    seeds = []
    for b in np.nonzero(coins)[0]:
        members = np.nonzero(labels == b)[0]
        seeds.append(members[picks[b] % members.size])
    # no coin landing heads means an epidemic with no infections, which is a
    # valid (if quiet) replication under the Bernoulli seeding law
    seeds = np.sort(np.asarray(seeds, dtype=np.int64))
    out = sir_outcome(graph, seeds, q, periods, rep_seed, block_labels=labels)
    return graph, out


# -------------------------------------------------- infection probabilities


def infection_probability(
    graph: GraphTopology,
    q: float,
    periods: int,
    seed_node: int,
    reps: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo single-seed infection probabilities and their SEs."""
    if reps < 1:
        raise ParameterError("need at least one replication")
    counts = np.zeros(graph.n)
    seeds = np.asarray([seed_node], dtype=np.int64)
    for rep_seed in replication_seeds(seed, reps, 21, int(seed_node)):
        counts += sir_outcome(graph, seeds, q, periods, int(rep_seed)).infected
    prob = counts / reps
    se = np.sqrt(prob * (1.0 - prob) / reps)
    return prob, se
