"""Undirected graph topology with the accessors the diffusion models need."""

from __future__ import annotations

import json
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .._rng import stream
from ..errors import ParameterError


class GraphTopology:
    """Simple undirected graph over nodes 0..n-1 with a canonical edge list."""

    def __init__(self, n: int, edges: np.ndarray):
        self.n = int(n)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise ParameterError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ParameterError("self-loops are not allowed")
            edges = np.sort(edges, axis=1)
            edges = np.unique(edges, axis=0)
        self.edges = edges

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        if self.n_edges == 0:
            return sp.csr_matrix((self.n, self.n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * self.n_edges)
        return sp.csr_matrix(
            (data, (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        )

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    def neighbors(self, node: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[node] : a.indptr[node + 1]]

    def is_adjacent(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Vectorized adjacency test for index arrays."""
        i = np.atleast_1d(i)
        j = np.atleast_1d(j)
        out = np.zeros(i.shape, dtype=bool)
        a = self.adjacency
        for t in range(i.size):
            row = a.indices[a.indptr[i[t]] : a.indptr[i[t] + 1]]
            pos = np.searchsorted(row, j[t])
            out[t] = pos < row.size and row[pos] == j[t]
        return out

    @cached_property
    def is_connected(self) -> bool:
        ncomp, _ = csgraph.connected_components(self.adjacency, directed=False)
        return bool(ncomp == 1)

    def diameter(self, exact_limit: int = 4096) -> float:
        """Graph diameter; exact BFS sweep up to `exact_limit` nodes.

        Above the limit a double-sweep lower bound is returned (sufficient for
        the T >= diam warning check).  Disconnected graphs return inf.
        """
        if not self.is_connected:
            return float("inf")
        a = self.adjacency
        if self.n <= exact_limit:
            dist = csgraph.shortest_path(a, method="D", unweighted=True)
            return float(dist.max())
        d0 = csgraph.breadth_first_order(a, 0, return_predecessors=False)
        far = int(d0[-1])
        dist = csgraph.dijkstra(a, indices=far, unweighted=True)
        return float(dist[np.isfinite(dist)].max())

    def directed_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) over directed entries, row-sorted; used by SIR."""
        a = self.adjacency
        return a.indptr.astype(np.int64), a.indices.astype(np.int64)

    # ------------------------------------------------------------------ IO

    def save(self, path, sidecar: dict | None = None) -> None:
        np.savetxt(path, self.edges, fmt="%d")
        meta = {"n": self.n, "n_edges": self.n_edges}
        meta.update(sidecar or {})
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GraphTopology":
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        edges = np.loadtxt(path, dtype=np.int64, ndmin=2)
        if edges.size == 0:
            edges = np.empty((0, 2), dtype=np.int64)
        return cls(meta["n"], edges)


# ------------------------------------------------------------- constructors


def path_graph(n: int) -> GraphTopology:
    idx = np.arange(n - 1)
    return GraphTopology(n, np.column_stack([idx, idx + 1]))


def star_graph(leaves: int) -> GraphTopology:
    edges = np.column_stack([np.zeros(leaves, dtype=np.int64), np.arange(1, leaves + 1)])
    return GraphTopology(leaves + 1, edges)


def cycle_graph(n: int) -> GraphTopology:
    idx = np.arange(n)
    return GraphTopology(n, np.column_stack([idx, (idx + 1) % n]))


def complete_graph(n: int) -> GraphTopology:
    i, j = np.triu_indices(n, k=1)
    return GraphTopology(n, np.column_stack([i, j]))


def _sample_pair_indices(n_pairs: int, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of present pairs among `n_pairs` i.i.d. Bernoulli(prob) slots.

    Dense draw for small spaces; binomial count plus rejection-deduped index
    sampling for large sparse ones.
    """
    if n_pairs <= 0 or prob <= 0:
        return np.empty(0, dtype=np.int64)
    if prob >= 1:
        return np.arange(n_pairs, dtype=np.int64)
    if n_pairs <= 4_000_000:
        return np.nonzero(rng.random(n_pairs) < prob)[0].astype(np.int64)
    count = int(rng.binomial(n_pairs, prob))
    chosen: np.ndarray = np.empty(0, dtype=np.int64)
    while chosen.size < count:
        draw = rng.integers(0, n_pairs, size=2 * (count - chosen.size) + 16, dtype=np.int64)
        chosen = np.unique(np.concatenate([chosen, draw]))[: count]
    return np.sort(chosen)


def _decode_triu(idx: np.ndarray, n: int) -> np.ndarray:
    """Map linear indices over the strict upper triangle of an n x n grid to (i, j)."""
    # Row i starts at offset i*n - i*(i+1)/2 counting pairs (i, j>i).
    idx = np.asarray(idx, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * idx)) / 2).astype(np.int64)
    # Guard against float roundoff at row boundaries.
    start = i * (2 * n - i - 1) // 2
    i = np.where(start > idx, i - 1, i)
    nxt = (i + 1) * (2 * n - i - 2) // 2
    i = np.where(nxt <= idx, i + 1, i)
    start = i * (2 * n - i - 1) // 2
    j = (idx - start) + i + 1
    return np.column_stack([i, j])


def gnp_graph(n: int, p: float, seed: int) -> GraphTopology:
    """Erdos-Renyi G(n, p), seeded."""
    rng = stream(seed, 11)
    n_pairs = n * (n - 1) // 2
    idx = _sample_pair_indices(n_pairs, p, rng)
    return GraphTopology(n, _decode_triu(idx, n))


def sbm_graph(
    n: int,
    k: int,
    p_in: float,
    p_ac: float,
    seed: int,
) -> tuple[GraphTopology, np.ndarray]:
    """Stochastic block model with near-equal blocks; returns (graph, block labels)."""
    if not (0 <= p_in <= 1 and 0 <= p_ac <= 1):
        raise ParameterError("p_in and p_ac must lie in [0, 1]")
    if not 1 <= k <= n:
        raise ParameterError("block count must lie in [1, n]")
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    labels = np.repeat(np.arange(k, dtype=np.int64), sizes)
    starts = np.concatenate([[0], np.cumsum(sizes)])

    rng = stream(seed, 12)
    chunks = []
    for b in range(k):
        nb = int(sizes[b])
        idx = _sample_pair_indices(nb * (nb - 1) // 2, p_in, rng)
        if idx.size:
            chunks.append(_decode_triu(idx, nb) + starts[b])
    # Across-block pairs: sample over all unordered pairs, then keep the
    # cross-block ones.  Membership of a pair in the cross set is independent
    # of the within sampling above, so thinning preserves the SBM law.
    if p_ac > 0 and k > 1:
        idx = _sample_pair_indices(n * (n - 1) // 2, p_ac, rng)
        if idx.size:
            pairs = _decode_triu(idx, n)
            cross = labels[pairs[:, 0]] != labels[pairs[:, 1]]
            if np.any(cross):
                chunks.append(pairs[cross])
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return GraphTopology(n, edges), labels


def graph_from_config(cfg: dict) -> GraphTopology:
    """Build a graph from a config mapping (CLI and model params share this)."""
    kind = cfg.get("kind")
    if kind == "path":
        return path_graph(int(cfg["n"]))
    if kind == "star":
        return star_graph(int(cfg["leaves"]))
    if kind == "cycle":
        return cycle_graph(int(cfg["n"]))
    if kind == "complete":
        return complete_graph(int(cfg["n"]))
    if kind == "gnp":
        n = int(cfg["n"])
        if "p" in cfg:
            p = float(cfg["p"])
        else:
            p = float(cfg["avg_degree"]) / (n - 1)
        return gnp_graph(n, p, int(cfg.get("seed", 0)))
    if kind == "edges":
        return GraphTopology(int(cfg["n"]), np.asarray(cfg["edges"], dtype=np.int64))
    if kind == "file":
        return GraphTopology.load(cfg["path"])
    raise ParameterError(f"unknown graph kind {kind!r}")
