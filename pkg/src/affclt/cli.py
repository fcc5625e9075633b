"""Config-driven command line: diagnose, normality, estimate, gen, info.

Exit codes: 0 all checks pass, 1 config or I/O error, 2 a FAIL verdict,
3 an INCONCLUSIVE verdict.  Outputs are deterministic for a fixed config and
seed; wall-clock metadata goes to a separate sidecar file.
"""

from __future__ import annotations

import datetime
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, apps, diagnostics, kernels, models, normality
from .config import ExperimentConfig
from .errors import AffcltError, ConfigError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2
EXIT_INCONCLUSIVE = 3


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("AFFCLT_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("thread count must be positive")
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(threads)
    except ImportError:
        pass
    return threads


class _Run:
    """Shared state: validated config, output directory, result writer."""

    def __init__(self, config_path: str | None, seed: int | None, out: str, threads: int | None):
        if config_path is None:
            raise ConfigError("--config is required for this command")
        self.config = ExperimentConfig.load(config_path)
        if seed is not None:
            self.config.seed = seed
        self.out = Path(out)
        self.threads = _resolve_threads(threads)

    def write(self, name: str, payload) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        if isinstance(payload, (dict, list)):
            body = {
                "tool_version": __version__,
                "config_hash": self.config.config_hash(),
                "result": payload,
            }
            path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
        else:
            path.write_text(str(payload))
        return path

    def write_sidecar(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        meta = {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "threads": self.threads,
            "backend": kernels.BACKEND,
            "seed": self.config.seed,
        }
        (self.out / "run_meta.json").write_text(json.dumps(meta, indent=2) + "\n")


_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(), default=None, help="Config file (TOML or JSON)."),
    click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed (overrides config)."),
    click.option("--threads", type=int, default=None, help="Worker threads (or AFFCLT_THREADS)."),
    click.option("--out", type=click.Path(), default="out", help="Output directory."),
]


def _with_options(fn):
    for opt in reversed(_OPTIONS):
        fn = opt(fn)
    return fn


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except (AffcltError, ValueError, KeyError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ERROR)
        sys.exit(code)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
def main():
    """Dependence-model simulation and normal-approximation diagnostics."""


@main.command()
@_with_options
@_guarded
def diagnose(config_path, seed, threads, out):
    """Assumption sums across the n-grid with scaling verdicts."""
    run = _Run(config_path, seed, out, threads)
    cfg = run.config
    diag = cfg.diagnostics
    n_grid = diag.get("n_grid")
    if not n_grid:
        raise ConfigError("diagnostics.n_grid is required")
    reps_setting = diag.get("reps", 256)

    def reps_fn(n: int) -> int:
        if isinstance(reps_setting, list):
            return int(reps_setting[sorted(n_grid).index(n)])
        return int(reps_setting)

    case = diagnostics.GridCase(
        spec_fn=lambda n: cfg.model_spec(n),
        aff_fn=lambda spec: cfg.build_affinity(spec),
        reps_fn=reps_fn,
        a3_mode=diag.get("a3_mode", "auto"),
    )
    report = diagnostics.run_assumption_grid(
        case,
        [int(n) for n in n_grid],
        master_seed=cfg.seed,
        tau=float(diag.get("tau", 0.02)),
        triple_budget=int(diag.get("triple_budget", diagnostics.DEFAULT_TRIPLE_BUDGET)),
        pair_budget=int(diag.get("pair_budget", diagnostics.DEFAULT_PAIR_BUDGET)),
        n_bins=int(diag.get("bins", diagnostics.DEFAULT_BINS)),
    )
    run.write("diagnostics.json", json.loads(report.to_json()))
    run.write("diagnostics.csv", report.to_csv())
    for which in ("a1", "a2", "a3"):
        series = report.loglog_series(which)
        lines = ["log_n,log_ratio"] + [f"{a:.17g},{b:.17g}" for a, b in series]
        run.write(f"loglog_{which}.csv", "\n".join(lines) + "\n")
    run.write_sidecar()
    verdicts = report.verdicts()
    for name, verdict in sorted(verdicts.items()):
        click.echo(f"{name}: {verdict} (slope {report.slopes[name].slope:+.3f})")
    if any(v == "FAIL" for v in verdicts.values()):
        return EXIT_FAIL
    if any(v == "INCONCLUSIVE" for v in verdicts.values()):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


@main.command(name="normality")
@_with_options
@_guarded
def normality_cmd(config_path, seed, threads, out):
    """Whitened-sum distribution checks against the standard normal."""
    run = _Run(config_path, seed, out, threads)
    cfg = run.config
    spec = cfg.model_spec()
    aff = cfg.build_affinity(spec)
    section = cfg.normality
    report = normality.run_normality(
        spec,
        aff,
        reps=int(section.get("reps", 2000)),
        master_seed=cfg.seed,
        n_projections=int(section.get("projections", 20)),
        level=float(section.get("level", 0.01)),
        pilot_reps=section.get("pilot_reps"),
    )
    run.write("normality.json", json.loads(report.to_json()))
    rows, _ = normality.whitened_sums(spec, aff, report.reps, cfg.seed, omega=report.omega)
    for d in range(rows.shape[1]):
        run.write(f"qq_dim{d}.csv", normality.qq_csv(rows[:, d]))
    run.write_sidecar()
    click.echo(
        f"KS gate {report.ks_gate:.4f}; marginal KS "
        + ", ".join(f"{k:.4f}" for k in report.marginal_ks)
        + f"; {'pass' if report.passed else 'fail'}"
    )
    return EXIT_OK if report.passed else EXIT_FAIL


def _estimate_ht(cfg: ExperimentConfig) -> dict:
    section = cfg.estimate
    graph = models.graph_from_config(section["graph"])
    design = apps.ExposureDesign(graph=graph, pi_t=float(section["pi_t"]))
    probs, ses = apps.exposure_probabilities(
        design, reps=int(section.get("prob_reps", 100_000)), seed=cfg.seed
    )
    assignment = np.asarray(section["assignment"], dtype=np.int64)
    outcomes = np.asarray(section["outcomes"], dtype=np.float64)
    levels = tuple(int(x) for x in section.get("levels", [1, 4]))
    est = apps.ht_estimate(
        design, probs, assignment, outcomes, levels, mode=section.get("positivity", "flag")
    )
    return json.loads(est.to_json())


def _estimate_qhat(cfg: ExperimentConfig) -> dict:
    section = cfg.estimate
    if section.get("mode", "mc") == "star":
        value = apps.q_hat_star(int(section["infected"]), int(section["leaves"]))
        return {"estimand": "q", "value": value, "mode": "star"}
    graph = models.graph_from_config(section["graph"])
    seed_nodes = np.asarray(section["seed_nodes"], dtype=np.int64)
    periods = int(section.get("T", graph.n))
    reps = int(section.get("reps", 500))
    if "outcomes" in section:
        outcomes = np.asarray(section["outcomes"], dtype=np.float64)
    else:
        truth = float(section["q_truth"])
        outcome = models.gen_sir(
            {"graph": graph, "m": seed_nodes.size, "q": truth, "T": periods},
            graph.n,
            cfg.seed,
        )
        outcomes = outcome.values
        seed_nodes = outcome.seeds
    grid = [float(x) for x in section.get("grid", np.linspace(0.05, 0.95, 19))]
    result = apps.q_hat_mc(graph, seed_nodes, periods, outcomes, grid, reps, cfg.seed)
    return json.loads(result.to_json())


def _estimate_socio(cfg: ExperimentConfig) -> dict:
    section = cfg.estimate
    spec = apps.SocioCovSpec(
        locations=np.asarray(section["locations"], dtype=np.float64),
        group_labels=np.asarray(section["group_labels"], dtype=np.int64),
        interaction=np.asarray(section["interaction"], dtype=np.float64),
        sigma2=float(section.get("sigma2", 1.0)),
        length_scale=float(section.get("length_scale", 1.0)),
    )
    kernel, psd = apps.socio_cov_kernel(spec)
    n = spec.locations.shape[0]
    idx = np.arange(n, dtype=np.int64)
    grid_a, grid_b = np.meshgrid(idx, idx, indexing="ij")
    cov = kernel(grid_a.ravel(), grid_b.ravel()).reshape(n, n)
    return {"estimand": "socio_covariance", "psd": psd, "matrix": cov.tolist()}


@main.command()
@_with_options
@_guarded
def estimate(config_path, seed, threads, out):
    """Applied estimators: ht, qhat, or socio (estimate.kind in the config)."""
    run = _Run(config_path, seed, out, threads)
    cfg = run.config
    kind = cfg.estimate.get("kind")
    if kind == "ht":
        payload = _estimate_ht(cfg)
    elif kind == "qhat":
        payload = _estimate_qhat(cfg)
    elif kind == "socio":
        payload = _estimate_socio(cfg)
    else:
        raise ConfigError(f"estimate.kind must be ht, qhat or socio (got {kind!r})")
    run.write(f"estimate_{kind}.json", payload)
    run.write_sidecar()
    click.echo(json.dumps(payload.get("value", payload.get("q_hat", "written"))))
    return EXIT_OK


@main.command()
@_with_options
@_guarded
def gen(config_path, seed, threads, out):
    """Emit raw replication files for the configured model."""
    run = _Run(config_path, seed, out, threads)
    cfg = run.config
    spec = cfg.model_spec()
    reps = int(cfg.gen.get("reps", 1))
    batch = models.generate_batch(spec, cfg.seed, reps)
    run.out.mkdir(parents=True, exist_ok=True)
    for r, arr in enumerate(batch):
        arr.to_csv(run.out / f"sample_{r:05d}.csv")
    run.write_sidecar()
    click.echo(f"wrote {reps} replication(s) to {run.out}")
    return EXIT_OK


@main.command()
@_guarded
def info():
    """Version, kernel backend, and available models and recipes."""
    click.echo(f"affclt {__version__}")
    click.echo(f"kernel backend: {kernels.BACKEND}")
    click.echo(f"models: {', '.join(models.MODEL_IDS)}")
    click.echo(
        "affinity recipes: singleton, m_ball, distance_ball, "
        "graph_neighborhood, infection_ball, block_set, hybrid_set"
    )
    return EXIT_OK


if __name__ == "__main__":
    main()
