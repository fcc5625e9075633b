"""Acceptance gate: ten end-to-end criteria, one pass/fail line each.

Run with ``pytest -v tests/test_acceptance.py``; the verbose listing gives the
per-criterion verdict and each test prints its measured statistics.  Criteria
are deliberately strict: a red line here means the pinned tolerance is not
met, not that the suite is broken.
"""

import filecmp
import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from affclt import affinity, apps, diagnostics, kernels, models, normality
from affclt.cli import main
from affclt.models import ModelSpec, analytic_kernel, generate_matrix
from affclt.models.diffusion import sbm_graph_cached
from affclt.models.fields import grid_locations, matern_covariance
from affclt.models.graphs import gnp_graph, path_graph, star_graph

KS_GATE_2000 = 1.63 / math.sqrt(2000)

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


# --------------------------------------------------------------- criterion 1


def test_criterion_01_analytic_kernel_fidelity():
    # [PAPER] empirical covariances at R = 1e5 match the analytic kernels
    # within 3 standard errors on >= 20 probe pairs per model
    big_r = 100_000
    n_pairs = 24
    seed = 101
    g = gnp_graph(50, 0.15, 11)
    specs = [
        ModelSpec("andrews_ar", {"rho": 0.5, "q": 0.5}, n=200),
        ModelSpec("m_dependent", {"M": 1, "weights": [1.0, 0.6]}, n=200),
        ModelSpec(
            "matern_gp",
            {"nu": 0.5, "sigma2": 1.0, "phi": 1.0,
             "locations": grid_locations(196, 1.0)},
            n=196,
        ),
        ModelSpec("edge_shock_graph", {"graph": g}, n=50),
    ]
    worst = {}
    for spec in specs:
        _, values = generate_matrix(spec, seed, big_r)
        kern = analytic_kernel(spec)
        rng = np.random.default_rng(seed + 1)
        a = rng.integers(0, spec.n, n_pairs)
        b = rng.integers(0, spec.n, n_pairs)
        centered = values - values.mean(axis=0)
        emp = kernels.pair_cov_values(centered, a, b)
        true = kern.eval_pairs(a, b)
        se = np.std(centered[:, a] * centered[:, b], axis=0) / np.sqrt(big_r)
        worst[spec.model_id] = float(np.max(np.abs(emp - true) / np.maximum(se, 1e-12)))
    print(f"criterion 1 max deviations (SEs): {worst}")
    assert all(dev < 3.0 for dev in worst.values()), worst


# --------------------------------------------------------------- criterion 2


def _marginal_ks(spec, aff, reps=2000, seed=42, pilot_reps=None):
    rows, _ = normality.whitened_sums(spec, aff, reps, seed, pilot_reps=pilot_reps)
    return normality.ks_distance(rows[:, 0])


def test_criterion_02_normality_positive_cases():
    # [PAPER] whitened-sum KS < 1.63/sqrt(R) at R = 2000 for four covered
    # designs.  Case (b) uses singleton sets on a geometrically correlated
    # series: the singleton normalization omits all cross covariances, the
    # whitened variance is (1+rho)/(1-rho) = 3, and the KS gap to the standard
    # normal is ~0.12 > gate for every R — this sub-case cannot pass as
    # stated, and the red line documents that.
    n = 10_000
    ks = {}
    ks["a_mdep"] = _marginal_ks(
        ModelSpec("m_dependent", {"M": 2, "weights": [1.0, 0.6, 0.3]}, n=n),
        affinity.m_ball(n, 2),
    )
    ks["b_andrews"] = _marginal_ks(
        ModelSpec("andrews_ar", {"rho": 0.5, "q": 0.5}, n=n),
        affinity.singleton(n),
    )
    g = gnp_graph(n, 4.0 / (n - 1), 7)
    ks["c_edge_shock"] = _marginal_ks(
        ModelSpec("edge_shock_graph", {"graph": g}, n=n),
        affinity.graph_neighborhood(g, 1),
    )
    n_grid = 4096  # 64 x 64 lattice
    locs = grid_locations(n_grid, 1.0)
    ks["d_matern"] = _marginal_ks(
        ModelSpec(
            "matern_gp",
            {"nu": 0.5, "sigma2": 1.0, "phi": 1.0, "locations": locs},
            n=n_grid,
        ),
        affinity.distance_ball(locs, affinity.epsilon_schedule(n_grid, gamma=0.5), 3.0),
    )
    print(f"criterion 2 KS values (gate {KS_GATE_2000:.4f}): {ks}")
    assert all(v < KS_GATE_2000 for v in ks.values()), ks


# --------------------------------------------------------------- criterion 3


def _sbm_params(n, k, p_ac, pilot_reps):
    s = n / k
    return {
        "k": k,
        "p_in": 2.0 / (0.5 * s),  # R0 = q * p_in * s = 2
        "p_ac": p_ac,
        "q": 0.5,
        "T": 64,
        "m": max(1, k // 2),
        "pilot_reps": pilot_reps,
    }


def _sbm_ks(n, k, p_ac, pilot_reps, seed=11):
    params = _sbm_params(n, k, p_ac, pilot_reps)
    _, labels = sbm_graph_cached(n, k, params["p_in"], p_ac, 0)
    spec = ModelSpec("sbm_diffusion", params, n=n)
    rows, _ = normality.whitened_sums(
        spec, affinity.block_set(labels), 2000, seed, pilot_reps=pilot_reps
    )
    return normality.ks_distance(rows[:, 0])


def test_criterion_03_sbm_dichotomy():
    # [PAPER] growing blocks k = ceil(sqrt(n)) pass the normality gate at
    # every size; fixed k = 4 with cross-block contagion fails it at the
    # largest size AND the diagnostic grid flags the third assumption
    ks_pos = {n: _sbm_ks(n, math.isqrt(n), 0.0, 2000) for n in (1024, 4096, 16384)}
    print(f"criterion 3 positive KS (gate {KS_GATE_2000:.4f}): {ks_pos}")
    assert all(v < KS_GATE_2000 for v in ks_pos.values()), ks_pos

    n_big = 16384
    ks_neg = _sbm_ks(n_big, 4, 1.2e-3 / n_big, 800)
    print(f"criterion 3 negative KS at n={n_big}: {ks_neg:.4f} (needs > 0.05)")
    assert ks_neg > 0.05

    case = diagnostics.GridCase(
        spec_fn=lambda n: ModelSpec("sbm_diffusion", _sbm_params(n, 4, 1.2e-3 / n, 400), n=n),
        aff_fn=lambda sp: affinity.block_set(
            sbm_graph_cached(sp.n, 4, sp.params["p_in"], sp.params["p_ac"], 0)[1]
        ),
        reps_fn=lambda n: 400,
        a3_mode="binned",
    )
    report = diagnostics.run_assumption_grid(case, [1024, 2048, 4096, 8192, 16384], master_seed=5)
    fit = report.slopes["a3"]
    print(f"criterion 3 diagnostic a3: {fit.verdict} slope {fit.slope:+.3f} +- {fit.se:.3f}")
    assert fit.verdict == "FAIL"


# --------------------------------------------------------------- criterion 4


def _grid_reps(n):
    return max(200, int(round(200 * math.sqrt(n / 1000))))


GRID_NS = [1000, 2371, 5623, 13335, 31623]  # 5-point geometric grid 1e3..10^4.5


def test_criterion_04_scaling_verdicts():
    # [PAPER] for the three graph/series designs of criterion 2, all three
    # assumption ratios shrink: upper slope CI below zero on the 5-point grid.
    # The a3 ratio of case (b) is 2 rho / (1 - rho) = 2 at every n (singleton
    # sets never absorb the geometric tail), so that sub-line stays red.
    cases = {
        "a_mdep": diagnostics.GridCase(
            spec_fn=lambda n: ModelSpec(
                "m_dependent", {"M": 2, "weights": [1.0, 0.6, 0.3]}, n=n
            ),
            aff_fn=lambda sp: affinity.m_ball(sp.n, 2),
            reps_fn=_grid_reps,
        ),
        "b_andrews": diagnostics.GridCase(
            spec_fn=lambda n: ModelSpec("andrews_ar", {"rho": 0.5, "q": 0.5}, n=n),
            aff_fn=lambda sp: affinity.singleton(sp.n),
            reps_fn=_grid_reps,
        ),
        "c_edge_shock": diagnostics.GridCase(
            spec_fn=lambda n: ModelSpec(
                "edge_shock_graph", {"graph": gnp_graph(n, 4.0 / (n - 1), 7)}, n=n
            ),
            aff_fn=lambda sp: affinity.graph_neighborhood(sp.params["graph"], 1),
            reps_fn=_grid_reps,
        ),
    }
    upper_cis = {}
    for name, case in cases.items():
        report = diagnostics.run_assumption_grid(case, GRID_NS, master_seed=7)
        for which, fit in report.slopes.items():
            upper_cis[f"{name}.{which}"] = fit.slope + 2.0 * fit.se
    print(f"criterion 4 slope upper CIs: { {k: round(v, 3) for k, v in upper_cis.items()} }")
    assert all(u < 0.0 for u in upper_cis.values()), upper_cis


# --------------------------------------------------------------- criterion 5


def test_criterion_05_singleton_reduction():
    # [DERIVED] with singleton sets the reduced sums coincide with the general
    # a2 / a3 computations to 1e-10
    spec = ModelSpec("m_dependent", {"M": 1, "weights": [1.0, 0.7]}, n=40)
    _, values = generate_matrix(spec, 13, 60)
    aff = affinity.singleton(40)
    a2_general, _ = diagnostics.a2_sum(values, aff, budget=10**9)
    a2_reduced, _ = diagnostics.reduced_pair_condition(values)
    a3_general, _ = diagnostics.a3_sum(values, aff, mode="positive")
    a3_reduced, _ = diagnostics.reduced_cov_condition(values)
    gap2 = abs(a2_general - a2_reduced)
    gap3 = abs(a3_general - a3_reduced)
    print(f"criterion 5 reduction gaps: a2 {gap2:.2e}, a3 {gap3:.2e}")
    assert gap2 < 1e-10 and gap3 < 1e-10


# --------------------------------------------------------------- criterion 6


def test_criterion_06_ht_exhaustive_unbiasedness():
    # [PAPER] averaging the estimator over all 2^4 Bernoulli(1/2) assignments
    # of a 4-node path with a fixed potential-outcome table recovers the
    # exposure contrast exactly
    graph = path_graph(4)
    design = apps.ExposureDesign(graph, 0.5)
    probs, _ = apps.exposure_probabilities(design)
    # potential outcomes y[i, d-1] for exposure levels d = 1..4
    y = np.array(
        [
            [3.0, 1.5, -0.5, 0.25],
            [2.0, 4.0, 1.0, -1.0],
            [0.5, 2.5, 3.5, 0.75],
            [-2.0, 1.0, 0.0, 2.0],
        ]
    )
    hi, lo = 2, 4
    truth = float(np.mean(y[:, hi - 1] - y[:, lo - 1]))
    total = 0.0
    for mask in range(16):
        assignment = np.array([(mask >> i) & 1 for i in range(4)], dtype=np.int64)
        labels = apps.exposure_map(design, assignment)
        outcomes = y[np.arange(4), labels - 1]
        total += apps.ht_estimate(design, probs, assignment, outcomes, (hi, lo)).value
    err = abs(total / 16.0 - truth)
    print(f"criterion 6 exhaustive bias: {err:.2e}")
    assert err < 1e-12


# --------------------------------------------------------------- criterion 7


def test_criterion_07_q_estimator():
    # [PAPER] the Monte Carlo moment estimator matches the closed star form
    # within 0.02, and recovers q = 0.2 on a 500-node block-model epidemic
    leaves = 200
    star = star_graph(leaves)
    grid = np.round(np.arange(0.05, 0.51, 0.025), 4)
    infected = np.zeros(leaves + 1)
    infected[0] = 1.0
    rng = np.random.default_rng(7)
    infected[1 + rng.choice(leaves, 40, replace=False)] = 1.0
    res_star = apps.q_hat_mc(star, np.array([0]), 1, infected, grid, reps=2000, seed=33)
    closed = apps.q_hat_star(40, leaves)
    star_gap = abs(res_star.q_hat - closed)

    n, k, q_true = 500, 10, 0.2
    p_in = 3.0 / (q_true * (n // k))
    params = {"k": k, "p_in": p_in, "p_ac": 0.5 / n, "q": q_true, "T": 64,
              "m": k // 2, "graph_seed": 3}
    graph, out = models.diffusion.gen_sbm_diffusion(params, n, 12345, warn_regime=False)
    res_sbm = apps.q_hat_mc(graph, out.seeds, 64, out.values, grid, reps=400, seed=31)
    print(
        f"criterion 7: star gap {star_gap:.4f} (tol 0.02), "
        f"sbm q_hat {res_sbm.q_hat:.4f} (window [0.15, 0.25])"
    )
    assert star_gap < 0.02
    assert 0.15 <= res_sbm.q_hat <= 0.25


# --------------------------------------------------------------- criterion 8


def test_criterion_08_matern_closed_forms():
    # [DERIVED] half-integer closed forms equal the Bessel evaluation to 1e-9
    h = np.arange(0.1, 5.0001, 0.1)
    worst = 0.0
    for nu in (0.5, 1.5):
        closed = matern_covariance(h, 1.3, 0.8, nu, method="auto")
        bessel = matern_covariance(h, 1.3, 0.8, nu, method="bessel")
        worst = max(worst, float(np.max(np.abs(closed - bessel))))
    print(f"criterion 8 max closed-form gap: {worst:.2e}")
    assert worst < 1e-9


# --------------------------------------------------------------- criterion 9

DETERMINISM_TOML = """
seed = 42
[model]
model_id = "m_dependent"
n = 10000
[model.params]
M = 2
weights = [1.0, 0.6, 0.3]
[affinity]
recipe = "m_ball"
M = 2
[normality]
reps = 2000
"""


def test_criterion_09_byte_identical_reruns(tmp_path):
    # [PAPER] rerunning a criterion's config with the same master seed must
    # reproduce every result file byte for byte
    cfg = tmp_path / "norm.toml"
    cfg.write_text(DETERMINISM_TOML)
    outs = []
    for run in ("run1", "run2"):
        out = tmp_path / run
        result = CliRunner().invoke(
            main, ["normality", "--config", str(cfg), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        outs.append(out)
    # run_meta.json is the wall-clock sidecar; every result file must match
    names = sorted(p.name for p in outs[0].iterdir() if p.name != "run_meta.json")
    assert names == sorted(
        p.name for p in outs[1].iterdir() if p.name != "run_meta.json"
    )
    assert names
    _, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    print(f"criterion 9: {len(names)} files compared, mismatches {mismatch}")
    assert not mismatch and not errors


# -------------------------------------------------------------- criterion 10


def test_criterion_10_subsampling_unbiasedness():
    # [PAPER] budgeted a1 / a2 agree with the exhaustive sums within 4
    # standard errors of the 100-repeat subsampling mean
    spec = ModelSpec("m_dependent", {"M": 2, "weights": [1.0, 0.5, 0.25]}, n=200)
    _, values = generate_matrix(spec, 29, 60)
    aff = affinity.m_ball(200, 2)
    exact_a1, _ = diagnostics.a1_sum(values, aff, budget=10**9)
    exact_a2, _ = diagnostics.a2_sum(values, aff, budget=10**9)
    reps_a1 = np.array(
        [diagnostics.a1_sum(values, aff, budget=2000, master_seed=s)[0] for s in range(100)]
    )
    reps_a2 = np.array(
        [diagnostics.a2_sum(values, aff, budget=5000, master_seed=s)[0] for s in range(100)]
    )
    dev1 = abs(reps_a1.mean() - exact_a1) / (reps_a1.std(ddof=1) / 10.0)
    dev2 = abs(reps_a2.mean() - exact_a2) / (reps_a2.std(ddof=1) / 10.0)
    print(f"criterion 10 deviations: a1 {dev1:.2f} SEs, a2 {dev2:.2f} SEs (gate 4)")
    assert dev1 < 4.0 and dev2 < 4.0
