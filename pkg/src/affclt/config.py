"""Experiment configuration: TOML/JSON loading, strict validation, hashing."""

from __future__ import annotations

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import affinity as affinity_mod
from . import models
from .core import AffinityMap
from .errors import ConfigError

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version",
    "seed",
    "model",
    "affinity",
    "diagnostics",
    "normality",
    "estimate",
    "gen",
}
_MODEL_KEYS = {"model_id", "n", "p", "params"}
_AFFINITY_KEYS = {
    "recipe",
    "M",
    "radius",
    "eps",
    "gamma",
    "exponent",
    "scale",
    "rho0",
    "metric",
    "q",
    "T",
    "R",
    "labels",
    "group_labels",
    "group_affinity",
}
_DIAG_KEYS = {
    "n_grid",
    "reps",
    "tau",
    "triple_budget",
    "pair_budget",
    "bins",
    "a3_mode",
}
_NORMALITY_KEYS = {"reps", "projections", "level", "pilot_reps"}
_GEN_KEYS = {"reps"}
_ESTIMATE_KEYS = {
    "kind",
    # ht
    "graph",
    "pi_t",
    "assignment",
    "outcomes",
    "levels",
    "prob_reps",
    "positivity",
    # qhat
    "mode",
    "infected",
    "leaves",
    "seed_nodes",
    "T",
    "grid",
    "reps",
    "q_truth",
    # socio
    "locations",
    "group_labels",
    "interaction",
    "sigma2",
    "length_scale",
}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    """Validated experiment description; raw sections kept for hashing."""

    seed: int
    model: Optional[dict] = None
    affinity: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)
    normality: dict = field(default_factory=dict)
    estimate: dict = field(default_factory=dict)
    gen: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        _reject_unknown(data, _TOP_KEYS, "config root")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        model = data.get("model")
        if model is not None:
            _reject_unknown(model, _MODEL_KEYS, "model")
            if "model_id" not in model or "n" not in model:
                raise ConfigError("model section needs model_id and n")
        aff = data.get("affinity")
        if aff is not None:
            _reject_unknown(aff, _AFFINITY_KEYS, "affinity")
            if "recipe" not in aff:
                raise ConfigError("affinity section needs a recipe")
        diag = data.get("diagnostics", {})
        _reject_unknown(diag, _DIAG_KEYS, "diagnostics")
        norm = data.get("normality", {})
        _reject_unknown(norm, _NORMALITY_KEYS, "normality")
        est = data.get("estimate", {})
        _reject_unknown(est, _ESTIMATE_KEYS, "estimate")
        gen = data.get("gen", {})
        _reject_unknown(gen, _GEN_KEYS, "gen")
        return cls(
            seed=seed,
            model=model,
            affinity=aff,
            diagnostics=dict(diag),
            normality=dict(norm),
            estimate=dict(est),
            gen=dict(gen),
            raw=data,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if path.suffix == ".json":
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON config: {exc}") from exc
        else:
            try:
                data = tomllib.loads(text.decode())
            except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
                raise ConfigError(f"invalid TOML config: {exc}") from exc
        return cls.from_dict(data)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    # ------------------------------------------------------------- builders

    def model_spec(self, n: Optional[int] = None) -> models.ModelSpec:
        if self.model is None:
            raise ConfigError("config has no model section")
        params = dict(self.model.get("params", {}))
        n_use = int(n if n is not None else self.model["n"])
        p_use = int(self.model.get("p", 1))
        if isinstance(params.get("graph"), dict):
            # Inline graph configs follow the array size, so grid runs get a
            # graph of matching node count at every n.
            gcfg = dict(params["graph"])
            if "n" in gcfg:
                gcfg["n"] = n_use * p_use
            params["graph"] = models.graph_from_config(gcfg)
        return models.ModelSpec(
            model_id=self.model["model_id"],
            params=params,
            n=n_use,
            p=p_use,
        )

    def build_affinity(self, spec: models.ModelSpec) -> AffinityMap:
        if self.affinity is None:
            raise ConfigError("config has no affinity section")
        acfg = self.affinity
        recipe = acfg["recipe"]
        p = spec.p
        if recipe == "singleton":
            return affinity_mod.singleton(spec.n, p)
        if recipe == "m_ball":
            return affinity_mod.m_ball(spec.n, int(acfg["M"]), p)
        if recipe == "distance_ball":
            locs = models.model_locations(spec)
            if locs is None:
                raise ConfigError(f"model {spec.model_id} has no locations")
            eps = acfg.get("eps")
            if eps is None:
                eps = affinity_mod.epsilon_schedule(
                    spec.n, gamma=float(acfg.get("gamma", 0.9))
                )
            return affinity_mod.distance_ball(
                locs,
                float(eps),
                float(acfg["exponent"]),
                scale=float(acfg.get("scale", 1.0)),
                rho0=float(acfg.get("rho0", 0.0)),
                p=p,
                metric=acfg.get("metric", "euclidean"),
            )
        if recipe == "graph_neighborhood":
            graph = models.model_graph(spec)
            if graph is None:
                raise ConfigError(f"model {spec.model_id} has no graph")
            return affinity_mod.graph_neighborhood(graph, int(acfg.get("radius", 1)), p)
        if recipe == "infection_ball":
            graph = models.model_graph(spec)
            if graph is None:
                raise ConfigError(f"model {spec.model_id} has no graph")
            return affinity_mod.infection_ball(
                graph,
                float(acfg.get("q", spec.params.get("q", 0.1))),
                int(acfg.get("T", spec.params.get("T", graph.n))),
                float(acfg["eps"]),
                int(acfg.get("R", 2000)),
                self.seed,
                p=p,
            )
        if recipe == "block_set":
            labels = acfg.get("labels")
            if labels is None:
                labels = models.model_block_labels(spec)
            if labels is None:
                raise ConfigError("block_set needs labels (or an sbm_diffusion model)")
            return affinity_mod.block_set(np.asarray(labels, dtype=np.int64), p)
        if recipe == "hybrid_set":
            locs = models.model_locations(spec)
            if locs is None:
                raise ConfigError(f"model {spec.model_id} has no locations")
            return affinity_mod.hybrid_set(
                locs,
                float(acfg["eps"]),
                np.asarray(acfg["group_labels"], dtype=np.int64),
                np.asarray(acfg["group_affinity"], dtype=np.float64),
                float(acfg["exponent"]),
                scale=float(acfg.get("scale", 1.0)),
                p=p,
            )
        raise ConfigError(f"unknown affinity recipe {recipe!r}")
