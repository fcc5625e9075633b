import numpy as np
import pytest

from affclt import affinity, diagnostics, models
from affclt.core import omega_from_kernel
from affclt.diagnostics import (
    GridCase,
    a1_sum,
    a2_sum,
    a3_sum,
    empirical_omega,
    reduced_cov_condition,
    reduced_pair_condition,
    run_assumption_grid,
    scaling_verdict,
)
from affclt.errors import InsufficientReplications, ParameterError
from affclt.models import ModelSpec


# -------------------------------------------------------------- a1 hand oracles


def test_a1_full_sets_hand_example():
    # [DERIVED] Z = (1, -2), both sets = {0, 1}: G_i = -1 for both, so
    # a1 = |1|*1 + |-2|*1 = 3
    values = np.array([[1.0, -2.0]])
    aff = affinity.m_ball(2, 1)
    est, se = a1_sum(values, aff)
    assert est == pytest.approx(3.0)
    assert se == 0.0


def test_a1_singleton_abs_cubes():
    # [DERIVED] singleton sets: a1 = sum |z_i|^3; with z_i in {-1, +1} it is n
    values = np.where(np.random.default_rng(0).random((4, 10)) < 0.5, -1.0, 1.0)
    est, _ = a1_sum(values, affinity.singleton(10))
    assert est == pytest.approx(10.0)


def test_a1_subsampled_matches_exhaustive():
    rng = np.random.default_rng(1)
    values = rng.standard_normal((40, 60))
    aff = affinity.m_ball(60, 5)
    exact, _ = a1_sum(values, aff)
    sub, sub_se = a1_sum(values, aff, budget=3000, master_seed=9)
    assert sub_se > 0
    assert abs(sub - exact) < 4 * sub_se


# -------------------------------------------------------------- a2 hand oracles


def test_a2_is_variance_of_weighted_sum():
    # [TRIVIAL] exhaustive a2 equals Var-hat(sum_i Z_i G_i) by construction
    rng = np.random.default_rng(2)
    values = rng.standard_normal((30, 12))
    aff = affinity.m_ball(12, 2)
    g = np.array(
        [values[:, aff.members(i)].sum(axis=1) for i in range(12)]
    ).T
    expect = np.var((values * g).sum(axis=1), ddof=1)
    est, _ = a2_sum(values, aff)
    assert est == pytest.approx(expect, rel=1e-12)


def test_a2_subsampled_matches_exhaustive():
    rng = np.random.default_rng(3)
    values = rng.standard_normal((60, 50))
    aff = affinity.m_ball(50, 3)
    exact, _ = a2_sum(values, aff)
    sub, sub_se = a2_sum(values, aff, budget=800, master_seed=4)
    assert abs(sub - exact) < 4 * sub_se


def test_a2_needs_two_replications():
    with pytest.raises(InsufficientReplications):
        a2_sum(np.ones((1, 5)), affinity.singleton(5))


# -------------------------------------------------------------- a3 hand oracles


def test_a3_positive_singleton_analytic_andrews():
    # [DERIVED] rho=q=1/2, n=3, singleton sets: sum_{i!=j} cov(Z_i, Z_j)
    # = 2*(1/6 + 1/6 + 1/12) = 5/6 from cov(h) = rho^h / 3
    spec = ModelSpec("andrews_ar", {"rho": 0.5, "q": 0.5}, n=3)
    reps = 60_000
    _, values = models.generate_matrix(spec, 7, reps)
    est, se = a3_sum(values, affinity.singleton(3), mode="positive")
    assert abs(est - 5.0 / 6.0) < 3.5 * se


def test_a3_positive_zero_outside_support():
    # [DERIVED] edge shocks with 1-hop neighborhoods: every nonzero covariance
    # is inside a set, so the outside sum is exactly zero in expectation
    g = models.gnp_graph(40, 0.08, 5)
    spec = ModelSpec("edge_shock_graph", {"graph": g}, n=40)
    _, values = models.generate_matrix(spec, 11, 4000)
    aff = affinity.graph_neighborhood(g, radius=1)
    est, se = a3_sum(values, aff, mode="positive")
    assert abs(est) < 3.5 * se


def test_a3_binned_refuses_too_few_replications():
    values = np.random.default_rng(5).standard_normal((100, 6))
    with pytest.raises(InsufficientReplications, match="400"):
        a3_sum(values, affinity.singleton(6), mode="binned")


def test_a3_binned_iid_noise_floor():
    # [DERIVED] iid data: each outside pair contributes a folded-normal noise
    # floor, at most sqrt(2B / (pi R)) per pair (equality for Gaussian bin
    # sums; quantile conditioning and Jensen pull it below)
    big_r, n, bins = 800, 8, 8
    values = np.random.default_rng(6).standard_normal((big_r, n))
    est, se = a3_sum(values, affinity.singleton(n), mode="binned")
    ceiling = n * (n - 1) * np.sqrt(2 * bins / (np.pi * big_r))
    assert 0.0 < est < 1.05 * ceiling
    assert est > ceiling / 3.0  # it is a floor, not a vanishing term


def test_a3_unknown_mode_rejected():
    with pytest.raises(ParameterError):
        a3_sum(np.ones((3, 2)), affinity.singleton(2), mode="bogus")


# ---------------------------------------------------- singleton reductions


def test_reduced_forms_equal_general_machinery():
    # [DERIVED] singleton sets: the reduced pair/cov conditions and the general
    # a2/a3 accumulators share code paths and agree to 1e-10
    rng = np.random.default_rng(8)
    values = rng.standard_normal((50, 15))
    aff = affinity.singleton(15)
    pair_red, _ = reduced_pair_condition(values)
    pair_gen, _ = a2_sum(values * values - 0.0, affinity.singleton(15))
    # reduced pair condition is Var(sum Z_i^2): compare against the identity
    assert pair_red == pytest.approx(np.var((values**2).sum(axis=1), ddof=1), abs=1e-10)
    cov_red, _ = reduced_cov_condition(values)
    cov_gen, _ = a3_sum(values, aff, mode="positive")
    assert cov_red == pytest.approx(cov_gen, abs=1e-10)


# ------------------------------------------------------ permutation invariance


def test_sums_invariant_under_relabeling():
    rng = np.random.default_rng(9)
    n = 14
    values = rng.standard_normal((40, n))
    aff = affinity.m_ball(n, 2)
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    sets_perm = [inv[aff.members(int(p))].tolist() for p in perm]
    from affclt.core import AffinityMap

    aff_perm = AffinityMap.from_sets(n, 1, sets_perm)
    vals_perm = values[:, perm]
    for fn in (a1_sum, a2_sum):
        orig, _ = fn(values, aff)
        perm_est, _ = fn(vals_perm, aff_perm)
        assert perm_est == pytest.approx(orig, rel=1e-10)
    orig3, _ = a3_sum(values, aff, mode="positive")
    perm3, _ = a3_sum(vals_perm, aff_perm, mode="positive")
    assert perm3 == pytest.approx(orig3, rel=1e-10)


# ------------------------------------------------------------ empirical omega


def test_empirical_omega_matches_kernel():
    spec = ModelSpec("m_dependent", {"M": 1, "weights": [1.0, 1.0]}, n=80)
    aff = affinity.m_ball(80, 1)
    kernel_omega = omega_from_kernel(models.analytic_kernel(spec), aff)
    _, values = models.generate_matrix(spec, 13, 8000)
    emp = empirical_omega(values, aff)
    assert emp.omega[0, 0] == pytest.approx(
        kernel_omega.omega[0, 0], abs=4 * emp.mc_se[0, 0]
    )
    assert emp.asymmetry == 0.0


# ------------------------------------------------------------ scaling verdicts


def test_scaling_verdict_decaying_passes():
    ns = [100, 200, 400, 800, 1600]
    est = [3.0 / np.sqrt(n) for n in ns]
    ses = [e * 0.02 for e in est]
    fit = scaling_verdict(ns, est, ses)
    assert fit.verdict == "PASS"
    assert fit.slope == pytest.approx(-0.5, abs=0.01)


def test_scaling_verdict_constant_inconclusive():
    ns = [100, 200, 400, 800, 1600]
    fit = scaling_verdict(ns, [2.0] * 5, [0.02] * 5)
    assert fit.verdict == "INCONCLUSIVE"
    assert abs(fit.slope) < 0.01


def test_scaling_verdict_growing_fails():
    ns = [100, 200, 400, 800, 1600]
    est = [0.1 * np.sqrt(n) for n in ns]
    fit = scaling_verdict(ns, est, [e * 0.02 for e in est])
    assert fit.verdict == "FAIL"
    assert fit.slope == pytest.approx(0.5, abs=0.01)


def test_scaling_verdict_precision_floor():
    # points indistinguishable from zero use their SE as the magnitude
    ns = [100, 200, 400, 800, 1600]
    ses = [1.0 / np.sqrt(n) for n in ns]
    est = [0.1 * s for s in ses]
    fit = scaling_verdict(ns, est, ses)
    assert all(fit.floored)
    assert fit.magnitudes == pytest.approx(ses)
    assert fit.verdict == "PASS"  # the floor itself decays like n^-1/2


def test_scaling_verdict_sign_flag_and_grid_size():
    fit = scaling_verdict([10, 20, 40, 80, 160], [-1.0] * 5, [0.01] * 5)
    assert fit.sign_flagged
    with pytest.raises(ParameterError):
        scaling_verdict([10, 20], [1.0, 1.0], [0.1, 0.1])
    small = scaling_verdict([10, 20], [1.0, 0.5], [0.01, 0.01], require_grid=False)
    assert small.slope < 0


# ---------------------------------------------------------------- grid runner


def test_run_assumption_grid_ma1_passes():
    # MA(1) with index balls: all three normalized sums decay like n^-1/2
    case = GridCase(
        spec_fn=lambda n: ModelSpec("m_dependent", {"M": 1, "weights": [1.0, 1.0]}, n=n),
        aff_fn=lambda spec: affinity.m_ball(spec.n, 1),
        reps_fn=lambda n: max(96, n // 4),
    )
    ns = [128, 256, 512, 1024, 2048]
    report = run_assumption_grid(case, ns, master_seed=3)
    assert report.verdicts() == {"a1": "PASS", "a2": "PASS", "a3": "PASS"}
    assert report.a3_mode == "positive"
    # omega grows ~ linearly in n
    assert report.omega_growth.slope == pytest.approx(1.0, abs=0.05)
    # serialization round trips
    import json

    blob = json.loads(report.to_json())
    assert len(blob["points"]) == 5
    assert "a2" in blob["slopes"]
    csv_text = report.to_csv()
    assert csv_text.count("\n") == 1 + 3 * 5
    series = report.loglog_series("a1")
    assert series.shape == (5, 2)
