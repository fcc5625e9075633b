"""Seeded generators for the seven dependence models and their kernels.

Each model is registered with: a batch value generator (one Philox stream per
replication seed), an analytic covariance kernel when one exists, a positive-
association flag, and optional location/graph accessors.  Dimensions p > 1 are
realized by generating n*p values and reshaping in flat-index order, so the
kernels (which speak flat indices) apply unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .._rng import NS_MODEL, NS_PILOT, replication_seeds
from ..core import CovKernel, SampleArray
from ..errors import ParameterError
from . import diffusion, fields, graphs, timeseries
from .diffusion import DiffusionOutcome, gen_sbm_diffusion, gen_sir, infection_probability
from .graphs import GraphTopology, gnp_graph, graph_from_config, sbm_graph

__all__ = [
    "ModelSpec",
    "MODEL_IDS",
    "generate",
    "generate_batch",
    "generate_matrix",
    "analytic_kernel",
    "positively_associated",
    "model_locations",
    "model_graph",
    "model_block_labels",
    "DiffusionOutcome",
    "GraphTopology",
    "gen_sir",
    "gen_sbm_diffusion",
    "infection_probability",
    "gnp_graph",
    "sbm_graph",
    "graph_from_config",
]


@dataclass(frozen=True)
class ModelSpec:
    """Which model, with which parameters, at which array size."""

    model_id: str
    params: dict = field(default_factory=dict)
    n: int = 0
    p: int = 1

    def __post_init__(self):
        if self.model_id not in _REGISTRY:
            raise ParameterError(
                f"unknown model {self.model_id!r}; known: {sorted(_REGISTRY)}"
            )
        if self.n < 1 or self.p < 1:
            raise ParameterError("n and p must be positive")

    @property
    def total(self) -> int:
        return self.n * self.p


def _params_key(params: dict) -> tuple:
    items = []
    for key in sorted(params):
        val = params[key]
        if isinstance(val, np.ndarray):
            items.append((key, val.shape, val.tobytes()))
        elif isinstance(val, GraphTopology):
            items.append((key, "graph", id(val)))
        elif isinstance(val, (list, tuple)):
            items.append((key, tuple(val)))
        else:
            items.append((key, val))
    return tuple(items)


# ------------------------------------------------- diffusion value adapters

_PILOT_MEANS: dict[tuple, np.ndarray] = {}


def _pilot_mean(params: dict, m: int, runner) -> np.ndarray:
    """Monte Carlo estimate of E[X] used to de-mean diffusion outcomes.

    The infection probabilities have no closed form, so centering uses a
    dedicated pilot stream (fixed ``pilot_seed``, default 0) shared by every
    replication of the same parameter set; the estimate is cached in-process.
    """
    reps = int(params.get("pilot_reps", 4096))
    pilot_seed = int(params.get("pilot_seed", 0))
    key = (_params_key(params), m, reps, pilot_seed)
    if key not in _PILOT_MEANS:
        counts = np.zeros(m)
        for rep_seed in replication_seeds(pilot_seed, reps, NS_PILOT):
            counts += runner(params, m, int(rep_seed)).infected
        _PILOT_MEANS[key] = counts / reps
    return _PILOT_MEANS[key]


def _sir_values(params: dict, m: int, seeds: np.ndarray) -> np.ndarray:
    mean = _pilot_mean(params, m, lambda p_, m_, s_: gen_sir(p_, m_, s_))
    out = np.empty((seeds.size, m))
    for r, seed in enumerate(seeds):
        out[r] = gen_sir(params, m, int(seed)).infected
    return out - mean


def _sbm_run(params: dict, m: int, rep_seed: int) -> DiffusionOutcome:
    return gen_sbm_diffusion(params, m, rep_seed, warn_regime=False)[1]


def _sbm_values(params: dict, m: int, seeds: np.ndarray) -> np.ndarray:
    # Surface the regime warnings once per batch, not per replication.
    graph, _ = gen_sbm_diffusion(params, m, int(seeds[0]))
    mean = _pilot_mean(params, m, _sbm_run)
    out = np.empty((seeds.size, m))
    for r, seed in enumerate(seeds):
        out[r] = _sbm_run(params, m, int(seed)).infected
    return out - mean


# ----------------------------------------------------- Gaussian field cache

_CHOL_CACHE: dict[tuple, np.ndarray] = {}


def _cached_chol(model_id: str, params: dict, m: int) -> np.ndarray:
    key = (model_id, _params_key(params), m)
    if key not in _CHOL_CACHE:
        if model_id == "lattice_field":
            _CHOL_CACHE[key] = fields.lattice_field_chol(params, m)
        else:
            _CHOL_CACHE[key] = fields.matern_chol(params, m)
    return _CHOL_CACHE[key]


def _lattice_values(params: dict, m: int, seeds: np.ndarray) -> np.ndarray:
    return fields.gaussian_values(_cached_chol("lattice_field", params, m), seeds)


def _matern_values(params: dict, m: int, seeds: np.ndarray) -> np.ndarray:
    return fields.gaussian_values(_cached_chol("matern_gp", params, m), seeds)


# ------------------------------------------------------------ the registry


@dataclass(frozen=True)
class _Handler:
    values: Callable[[dict, int, np.ndarray], np.ndarray]
    kernel: Optional[Callable[[dict, int], CovKernel]]
    positive: Callable[[dict], bool]
    locations: Optional[Callable[[dict, int], np.ndarray]] = None
    graph: Optional[Callable[[dict, int], GraphTopology]] = None


def _sbm_graph_of(params: dict, m: int) -> GraphTopology:
    return diffusion.sbm_graph_cached(
        m,
        int(params["k"]),
        float(params["p_in"]),
        float(params["p_ac"]),
        int(params.get("graph_seed", 0)),
    )[0]


_REGISTRY: dict[str, _Handler] = {
    "m_dependent": _Handler(
        values=timeseries.m_dependent_values,
        kernel=timeseries.m_dependent_kernel,
        positive=timeseries.m_dependent_positive,
    ),
    "andrews_ar": _Handler(
        values=timeseries.andrews_values,
        kernel=timeseries.andrews_kernel,
        positive=lambda params: True,
    ),
    "lattice_field": _Handler(
        values=_lattice_values,
        kernel=fields.lattice_field_kernel,
        positive=lambda params: True,
        locations=fields.lattice_field_locations,
    ),
    "edge_shock_graph": _Handler(
        values=diffusion.edge_shock_values,
        kernel=diffusion.edge_shock_kernel,
        positive=diffusion.edge_shock_positive,
        graph=lambda params, m: params["graph"],
    ),
    "sir_diffusion": _Handler(
        values=_sir_values,
        kernel=None,
        positive=lambda params: False,
        graph=lambda params, m: params["graph"],
    ),
    "sbm_diffusion": _Handler(
        values=_sbm_values,
        kernel=None,
        positive=lambda params: False,
        graph=_sbm_graph_of,
    ),
    "matern_gp": _Handler(
        values=_matern_values,
        kernel=fields.matern_kernel,
        positive=lambda params: True,
        locations=fields.matern_locations,
    ),
}

MODEL_IDS = tuple(sorted(_REGISTRY))


# ------------------------------------------------------------- entry points


def generate_matrix(spec: ModelSpec, master_seed: int, reps: int) -> tuple[np.ndarray, np.ndarray]:
    """(replication seeds, (R, n*p) value matrix in flat-index order)."""
    if reps < 1:
        raise ParameterError("replication count must be positive")
    handler = _REGISTRY[spec.model_id]
    seeds = replication_seeds(master_seed, reps, NS_MODEL)
    values = handler.values(spec.params, spec.total, seeds)
    return seeds, values


def generate(spec: ModelSpec, seed: int) -> SampleArray:
    """One replication as a SampleArray."""
    handler = _REGISTRY[spec.model_id]
    values = handler.values(spec.params, spec.total, np.asarray([seed], dtype=np.int64))
    return SampleArray(
        n=spec.n,
        p=spec.p,
        values=values.reshape(spec.n, spec.p),
        model_id=spec.model_id,
        seed=int(seed),
        positively_associated=positively_associated(spec),
    )


def generate_batch(spec: ModelSpec, master_seed: int, reps: int) -> list[SampleArray]:
    """Independent replications from per-replication Philox streams."""
    seeds, values = generate_matrix(spec, master_seed, reps)
    positive = positively_associated(spec)
    return [
        SampleArray(
            n=spec.n,
            p=spec.p,
            values=values[r].reshape(spec.n, spec.p),
            model_id=spec.model_id,
            seed=int(seeds[r]),
            positively_associated=positive,
        )
        for r in range(reps)
    ]


def analytic_kernel(spec: ModelSpec) -> Optional[CovKernel]:
    """The model's covariance kernel over flat indices, or None (diffusion)."""
    handler = _REGISTRY[spec.model_id]
    if handler.kernel is None:
        return None
    return handler.kernel(spec.params, spec.total)


def positively_associated(spec: ModelSpec) -> bool:
    return bool(_REGISTRY[spec.model_id].positive(spec.params))


def model_locations(spec: ModelSpec) -> Optional[np.ndarray]:
    handler = _REGISTRY[spec.model_id]
    return None if handler.locations is None else handler.locations(spec.params, spec.total)


def model_graph(spec: ModelSpec) -> Optional[GraphTopology]:
    handler = _REGISTRY[spec.model_id]
    return None if handler.graph is None else handler.graph(spec.params, spec.total)


def model_block_labels(spec: ModelSpec) -> Optional[np.ndarray]:
    if spec.model_id != "sbm_diffusion":
        return None
    params = spec.params
    return diffusion.sbm_graph_cached(
        spec.total,
        int(params["k"]),
        float(params["p_in"]),
        float(params["p_ac"]),
        int(params.get("graph_seed", 0)),
    )[1]
