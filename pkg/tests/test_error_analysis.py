import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arealinterp.aim import AimParams, PiecewiseModel, decompose_effects
from arealinterp.error_analysis import (
    REPORT_HEADER,
    AnalyticError,
    bias_variance_daw_dax,
    composite_error,
    composite_relative_error_sq,
    composite_source_error,
    effects_for_source,
    entry_expectations,
    error_difference,
    daw_dax_moments,
    piecewise_errors,
    proportional_moments,
    proportional_report,
    reg_error_approximations,
    relative_error_difference,
    relative_error_ratio_approx,
    source_errors_from_shares,
    source_variances,
    write_error_report,
)
from arealinterp.exceptions import NotNestedError, TargetStraddlesControlError
from arealinterp.field import CountField
from arealinterp.grid import GridRegion, Zone, build_zone_system, geometry_stats, intersect, stats_from_shares
from arealinterp.interpolators import daw_weights, dax_weights, linear_weights

from conftest import nested_zones, random_crossing, random_nested


# ---------------------------------------------------------------------------
# the 1x4 reference design: lambda_T1 = 2 + 15 = 17, lambda_T2 = 6 + 5 = 11, lambda_S = 28


def test_reference_target_moments(ref_design):
    fx = ref_design
    S, T1 = fx.sources.zones[0], fx.targets.zones[0]
    daw, dax = bias_variance_daw_dax(fx.params, S, T1, fx.x)
    assert (daw.bias, daw.variance, daw.mse) == pytest.approx((-10.0, 10.25, 110.25))
    assert (dax.bias, dax.variance, dax.mse) == pytest.approx((4.0, 7.25, 23.25))
    # generic fixed-weight moments give the same numbers: w = 1/4 and 3/4
    assert proportional_moments(0.25, 17.0, 28.0) == pytest.approx((-10.0, 10.25))
    assert proportional_moments(0.75, 17.0, 28.0) == pytest.approx((4.0, 7.25))


def test_reference_source_level(ref_design):
    fx = ref_design
    S = fx.sources.zones[0]
    assert source_variances(fx.params, S, fx.targets.zones, fx.x) == pytest.approx((20.5, 14.5))
    stats = geometry_stats(S, fx.targets.zones, fx.x)
    eff = effects_for_source(fx.params, S, fx.x)
    t1 = source_errors_from_shares(eff, stats)
    assert t1["er_daw"] == pytest.approx(220.5) and t1["er_dax"] == pytest.approx(46.5)
    assert t1["re2_daw"] == pytest.approx(0.28125) and t1["re2_dax"] == pytest.approx(46.5 / 784)
    # -D * Delta * (1 + 1/E) = 0.5 * 3/7 * 29/28
    assert relative_error_difference(eff, stats) == pytest.approx(0.5 * 3 / 7 * 29 / 28)
    assert relative_error_difference(eff, stats) == pytest.approx(0.221939, abs=5e-7)
    assert error_difference(fx.params, 1.0, 4.0, 30.0, 40.0) == pytest.approx(110.25 - 23.25)


def test_reference_composite(ref_design):
    fx = ref_design
    S = fx.sources.zones[0]
    ce = composite_error(fx.params, S, fx.targets.zones, fx.x)
    assert ce["targets"][0].mse == pytest.approx(17 * 11 / 28)
    assert ce["targets"][0].bias == 0.0
    assert ce["source"].mse == pytest.approx(28 - (17**2 + 11**2) / 28)
    stats = geometry_stats(S, fx.targets.zones, fx.x)
    eff = effects_for_source(fx.params, S, fx.x)
    re2 = composite_relative_error_sq(eff, stats)
    assert re2 == pytest.approx(ce["source"].mse / 28**2)
    assert re2 == pytest.approx(0.017037, abs=5e-7)
    approx = reg_error_approximations(eff, stats)
    assert approx["re_reg"] == pytest.approx(1 / np.sqrt(28))
    assert approx["diff_vs_daw"] == pytest.approx(-((1 - 3 / 7) ** 2) * 0.5)
    assert approx["diff_vs_dax"] == pytest.approx(-((1 + 3 / 7) ** 2) * 0.5)


# ---------------------------------------------------------------------------
# special cases


def test_x_proportional_to_area():
    g = GridRegion(1, 4)
    x = CountField(g, [5, 5, 5, 5])
    S = Zone("S", (0, 1, 2, 3))
    T = Zone("T", (0,))
    daw, dax = bias_variance_daw_dax(AimParams(3.0, (2.0,)), S, T, x)
    assert daw.bias == 0 and dax.bias == 0 and daw.variance == pytest.approx(dax.variance)
    assert error_difference(AimParams(3.0, (2.0,)), 1.0, 4.0, 5.0, 20.0) == 0.0


def test_homogeneous_submodel():
    g = GridRegion(1, 6)
    x = CountField(g, [1, 9, 2, 0, 4, 4])
    S = Zone("S", tuple(range(6)))
    T = Zone("T", (0, 1))
    daw, _ = bias_variance_daw_dax(AimParams(4.0, (0.0,)), S, T, x)
    assert daw.bias == 0.0
    assert daw.variance == pytest.approx(4.0 * 2 * (1 - 2 / 6))


def test_equal_targets_homogeneous_x():
    g = GridRegion(1, 6)
    x = CountField(g, [7] * 6)
    S = Zone("S", tuple(range(6)))
    targets = [Zone("a", (0, 1)), Zone("b", (2, 3)), Zone("c", (4, 5))]
    p = AimParams(2.0, (0.3,))
    want = (1 - 1 / 3) * (2.0 * 6 + 0.3 * 42)
    assert source_variances(p, S, targets, x) == pytest.approx((want, want))
    assert source_variances(p, S, [S], x) == pytest.approx((0.0, 0.0))
    assert composite_error(p, S, [S], x)["source"].mse == pytest.approx(0.0)


def test_not_nested():
    g = GridRegion(1, 4)
    x = CountField(g, [1, 1, 1, 1])
    with pytest.raises(NotNestedError):
        bias_variance_daw_dax(AimParams(1.0, (1.0,)), Zone("S", (0, 1)), Zone("T", (1, 2)), x)


def test_piecewise_errors():
    g = GridRegion(1, 4)
    cz = build_zone_system(g, ["C1", "C1", "C2", "C2"], "control")
    S = Zone("S", (0, 1, 2, 3))
    T1, T2 = Zone("T1", (0, 1)), Zone("T2", (2, 3))
    res = piecewise_errors(PiecewiseModel(cz, (2.0, 10.0)), S, [T1, T2])
    # lambda_S = 24, lambda_T1 = 4: bias = 24/2 - 4 = 8
    assert res["targets"][0].bias == pytest.approx(8.0)
    assert res["targets"][1].bias == pytest.approx(-8.0)
    swapped = piecewise_errors(PiecewiseModel(cz, (10.0, 2.0)), S, [T1, T2])
    assert swapped["targets"][0].bias == pytest.approx(-8.0)
    flat = piecewise_errors(PiecewiseModel(cz, (3.0, 3.0)), S, [T1, T2])
    assert all(e.bias == 0.0 for e in flat["targets"])
    with pytest.raises(TargetStraddlesControlError):
        piecewise_errors(PiecewiseModel(cz, (2.0, 10.0)), S, [Zone("a", (0,)), Zone("b", (1, 2, 3))])


def test_piecewise_matches_monte_carlo():
    g = GridRegion(1, 4)
    cz = build_zone_system(g, ["C1", "C1", "C2", "C2"], "control")
    S, T1 = Zone("S", (0, 1, 2, 3)), Zone("T1", (0, 1))
    res = piecewise_errors(PiecewiseModel(cz, (2.0, 10.0)), S, [T1, Zone("T2", (2, 3))])
    rng = np.random.default_rng(31)
    y = rng.poisson([2.0, 2.0, 10.0, 10.0], size=(200_000, 4))
    err = 0.5 * y.sum(1) - y[:, :2].sum(1)
    assert abs(err.mean() - res["targets"][0].bias) < 3 * err.std() / np.sqrt(len(err))
    sq = err**2
    assert abs(sq.mean() - res["targets"][0].mse) < 3 * sq.std() / np.sqrt(len(sq))


def test_reg_approximation_magnitude():
    eff = decompose_effects(AimParams(100.0, (1.0,)), 256.0, 100247.0)
    assert eff.expected == pytest.approx(125847.0)
    stats = geometry_stats(Zone("S", (0, 1)), [Zone("a", (0,)), Zone("b", (1,))], np.array([1.0, 1.0]),
                           GridRegion(1, 2))
    assert reg_error_approximations(eff, stats)["re_reg"] == pytest.approx(0.002819, abs=1e-6)
    assert reg_error_approximations(eff, stats)["diff_vs_daw"] == 0.0


# ---------------------------------------------------------------------------
# randomized identities


def _target_sums(fx, S, targets):
    errs = [bias_variance_daw_dax(fx.params, S, T, fx.x) for T in targets]
    return (sum(e[0].mse for e in errs), sum(e[1].mse for e in errs),
            sum(e[0].variance for e in errs), sum(e[1].variance for e in errs))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_share_formulas_match_target_sums(seed):
    fx = random_nested(np.random.default_rng(seed))
    for S, targets in nested_zones(fx):
        er_daw, er_dax, v_daw, v_dax = _target_sums(fx, S, targets)
        stats = geometry_stats(S, targets, fx.x)
        eff = effects_for_source(fx.params, S, fx.x)
        t1 = source_errors_from_shares(eff, stats)
        E = eff.expected
        assert t1["er_daw"] == pytest.approx(er_daw, rel=1e-9, abs=1e-9)
        assert t1["er_dax"] == pytest.approx(er_dax, rel=1e-9, abs=1e-9)
        assert t1["re2_daw"] == pytest.approx(er_daw / E**2, rel=1e-9, abs=1e-12)
        assert t1["re2_dax"] == pytest.approx(er_dax / E**2, rel=1e-9, abs=1e-12)
        assert source_variances(fx.params, S, targets, fx.x) == pytest.approx((v_daw, v_dax), rel=1e-9, abs=1e-9)
        diff = relative_error_difference(eff, stats)
        assert diff == pytest.approx(t1["re2_daw"] - t1["re2_dax"], rel=1e-9, abs=1e-12)
        comp = composite_error(fx.params, S, targets, fx.x)["source"].mse
        assert composite_relative_error_sq(eff, stats) == pytest.approx(comp / E**2, rel=1e-9, abs=1e-12)
        lam_t = [fx.params.alpha * T.area(fx.region) + fx.params.beta * fx.x.counts[list(T.cells)].sum()
                 for T in targets]
        assert comp == pytest.approx(composite_source_error(lam_t, E), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_error_difference_sign_follows_imbalance(seed):
    fx = random_nested(np.random.default_rng(seed))
    for S, targets in nested_zones(fx):
        eff = effects_for_source(fx.params, S, fx.x)
        s_area, x_s = S.area(fx.region), float(fx.x.counts[list(S.cells)].sum())
        for T in targets:
            t_area, x_t = T.area(fx.region), float(fx.x.counts[list(T.cells)].sum())
            daw, dax = bias_variance_daw_dax(fx.params, S, T, fx.x)
            diff = error_difference(fx.params, t_area, s_area, x_t, x_s)
            assert diff == pytest.approx(daw.mse - dax.mse, rel=1e-9, abs=1e-9)
            d = t_area / s_area - x_t / x_s
            assert diff == pytest.approx(-(d**2) * eff.delta * eff.expected * (eff.expected + 1), rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_composite_beats_both_variances(seed):
    fx = random_nested(np.random.default_rng(seed))
    for S, targets in nested_zones(fx):
        comp = composite_error(fx.params, S, targets, fx.x)
        for T, ce in zip(targets, comp["targets"]):
            daw, dax = bias_variance_daw_dax(fx.params, S, T, fx.x)
            assert ce.mse <= min(daw.variance, dax.variance) + 1e-9 * (1 + ce.mse)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_relative_error_ratio_for_large_counts(seed):
    # large expected counts, D bounded away from 0 and |Delta| <= 0.5
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    stats = stats_from_shares(p, q)
    if stats.D < 0.05:
        return
    E = float(rng.uniform(1e4, 1e6))
    ia = float(rng.uniform(0.25, 0.75))
    eff = decompose_effects(AimParams(ia * E, (1.0,)), 1.0, (1 - ia) * E)
    t1 = source_errors_from_shares(eff, stats)
    ratio = np.sqrt(t1["re2_daw"] / t1["re2_dax"])
    target = relative_error_ratio_approx(eff)
    assert abs(ratio - target) <= 0.05 * target


# ---------------------------------------------------------------------------
# table-based reports


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_proportional_report_matches_closed_forms(seed):
    fx = random_nested(np.random.default_rng(seed))
    tab = intersect(fx.sources, fx.targets, [fx.x])
    lam = entry_expectations(fx.params, tab)
    rep_daw = proportional_report("DAW", daw_weights(tab), tab, lam)
    rep_dax = proportional_report("DAX", dax_weights(tab), tab, lam)
    rep_c = proportional_report("COMPOSITE", linear_weights(fx.params.gamma, tab), tab, lam)
    by = {(e.method, e.scope, e.scope_id): e for e in rep_daw + rep_dax + rep_c}
    for S, targets in nested_zones(fx):
        for T in targets:
            daw, dax = bias_variance_daw_dax(fx.params, S, T, fx.x)
            assert by[("DAW", "target", T.id)].mse == pytest.approx(daw.mse, rel=1e-9, abs=1e-9)
            assert by[("DAX", "target", T.id)].mse == pytest.approx(dax.mse, rel=1e-9, abs=1e-9)
        ce = composite_error(fx.params, S, targets, fx.x)["source"]
        assert by[("COMPOSITE", "source", S.id)].mse == pytest.approx(ce.mse, rel=1e-9, abs=1e-9)
    for e in rep_daw + rep_dax + rep_c:
        assert e.mse == pytest.approx(e.bias**2 + e.variance, rel=1e-10, abs=1e-10)
        assert e.variance >= -1e-9


def test_report_on_crossing_layout_has_no_source_scope():
    fx = random_crossing(np.random.default_rng(3))
    tab = intersect(fx.sources, fx.targets, [fx.x])
    rep = proportional_report("DAW", daw_weights(tab), tab, entry_expectations(fx.params, tab))
    scopes = {e.scope for e in rep}
    assert "region" in scopes and "target" in scopes


def test_write_error_report(tmp_path):
    rows = [AnalyticError.from_moments("target", "T1", "DAW", -10.0, 10.25, 17.0)]
    write_error_report(rows, tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        recs = list(csv.reader(fh))
    assert recs[0] == REPORT_HEADER
    assert recs[1][:6] == ["target", "T1", "DAW", "-10", "10.25", "110.25"]
    assert recs[1][7] == "" and recs[1][8] == "0"


def test_daw_dax_moments_vectorised(ref_design):
    m = daw_dax_moments(AimParams(2.0, (0.5,)), np.array([1.0, 3.0]), 4.0, np.array([30.0, 10.0]), 40.0)
    np.testing.assert_allclose(m["bias_daw"], [-10.0, 10.0])
    np.testing.assert_allclose(m["var_dax"], [7.25, 7.25])
