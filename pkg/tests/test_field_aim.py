import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arealinterp.aim import (
    AimParams,
    PiecewiseModel,
    conditional_intensity,
    decompose_effects,
    expected_count,
    imbalance_table,
    piecewise_intensity,
)
from arealinterp.exceptions import AllZeroError, DegenerateModelError, RegionMismatchError, ZeroExpectationError
from arealinterp.field import (
    AUX_STREAM,
    CountField,
    IntensityField,
    derive_target_intensity,
    gini,
    homogeneous_intensity,
    read_counts,
    read_intensity,
    replicate_rng,
    simulate_counts,
    two_level_intensity,
    write_field,
)
from arealinterp.grid import GridRegion, build_zone_system


def test_replicate_streams_are_reproducible_and_distinct():
    a = replicate_rng(7, 3).integers(0, 2**62, 4)
    b = replicate_rng(7, 3).integers(0, 2**62, 4)
    c = replicate_rng(7, 4).integers(0, 2**62, 4)
    d = replicate_rng(7, 3, AUX_STREAM).integers(0, 2**62, 4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_simulate_counts_shape_and_seed():
    g = GridRegion(4, 4, 0.5)
    f = homogeneous_intensity(g, 10.0)
    c1 = simulate_counts(f, 2.0, seed=5, replicate=1)
    c2 = simulate_counts(f, 2.0, seed=5, replicate=1)
    assert np.array_equal(c1.counts, c2.counts) and c1.seed_provenance == (5, 1)
    with pytest.raises(ValueError):
        simulate_counts(f, 0.0)


def test_simulated_totals_match_intensity():
    # mean of 2000 replicate totals of a 100-cell field with mean 5 per cell: 500 +- 3*sqrt(500/2000)
    g = GridRegion(10, 10)
    f = homogeneous_intensity(g, 5.0)
    totals = [simulate_counts(f, 1.0, 11, r).total for r in range(2000)]
    assert abs(np.mean(totals) - 500.0) < 3 * np.sqrt(500.0 / 2000)
    assert np.var(totals, ddof=1) == pytest.approx(500.0, rel=0.1)


def test_field_validation():
    g = GridRegion(1, 3)
    with pytest.raises(RegionMismatchError):
        IntensityField(g, [1.0, 2.0])
    with pytest.raises(ValueError):
        IntensityField(g, [1.0, -2.0, 0.0])
    with pytest.raises(ValueError):
        CountField(g, [1, 2.5, 0])
    f = two_level_intensity(g, [1], 9.0, 1.0)
    np.testing.assert_array_equal(f.values, [1.0, 9.0, 1.0])
    y = derive_target_intensity(f, 2.0, 0.5)
    np.testing.assert_allclose(y.values, [2.5, 6.5, 2.5])
    with pytest.raises(DegenerateModelError):
        derive_target_intensity(f, 0.0, 0.0)


def test_field_csv_roundtrip(tmp_path):
    g = GridRegion(2, 3, 1.0)
    f = IntensityField(g, np.arange(6) * 0.1 + 1 / 3)
    write_field(f, tmp_path / "f.csv")
    np.testing.assert_array_equal(read_intensity(tmp_path / "f.csv").values, f.values)
    c = CountField(g, np.arange(6))
    write_field(c, tmp_path / "c.csv")
    np.testing.assert_array_equal(read_counts(tmp_path / "c.csv").counts, c.counts)


def test_gini_values():
    assert gini(np.ones(10)) == pytest.approx(0.0)
    # one nonzero among n: (n-1)/n
    assert gini(np.r_[np.zeros(9), 5.0]) == pytest.approx(0.9)
    with pytest.raises(AllZeroError):
        gini(np.zeros(4))


@given(st.lists(st.integers(0, 100), min_size=2, max_size=40).filter(lambda v: sum(v) > 0))
def test_gini_matches_pairwise_definition(values):
    y = np.array(values, dtype=float)
    n = y.size
    brute = np.abs(y[:, None] - y[None, :]).sum() / (2 * n * y.sum())
    assert gini(y) == pytest.approx(brute, abs=1e-12)
    assert gini(3 * y) == pytest.approx(gini(y), abs=1e-12)


def test_params_and_expected_count():
    p = AimParams(2.0, (0.5,))
    assert p.p == 1 and p.beta == 0.5
    np.testing.assert_array_equal(p.gamma, [2.0, 0.5])
    assert AimParams.from_gamma([1.0, 2.0, 3.0]).betas == (2.0, 3.0)
    assert expected_count(p, 4.0, [40.0]) == pytest.approx(28.0)
    np.testing.assert_allclose(expected_count(p, np.array([1.0, 3.0]), np.array([[30.0], [10.0]])), [17.0, 11.0])
    assert expected_count(AimParams(3.0), 2.0) == 6.0
    with pytest.raises(DegenerateModelError):
        AimParams(-1.0, (1.0,))
    with pytest.raises(DegenerateModelError):
        AimParams(0.0, (0.0,))


def test_effects_reference():
    # E = 2*4 + 0.5*40 = 28; Delta = (8 - 20) / 28
    e = decompose_effects(AimParams(2.0, (0.5,)), 4.0, 40.0, "S")
    assert e.expected == 28.0
    assert e.i_area == pytest.approx(8 / 28) and e.i_aux == pytest.approx(20 / 28)
    assert e.delta == pytest.approx(-3 / 7)
    with pytest.raises(ZeroExpectationError):
        decompose_effects(AimParams(0.0, (1.0,)), 4.0, 0.0)


@given(st.floats(0, 50), st.floats(0, 5), st.floats(0.1, 10), st.floats(0, 500))
def test_effect_shares_sum_to_one(alpha, beta, area, x):
    if alpha * area + beta * x <= 0 or alpha + beta == 0:
        return
    e = decompose_effects(AimParams(alpha, (beta,)), area, x)
    assert e.i_area + e.i_aux == pytest.approx(1.0)
    assert -1.0 - 1e-12 <= e.delta <= 1.0 + 1e-12
    assert e.delta == pytest.approx(e.i_area - e.i_aux, abs=1e-12)


def test_conditional_intensity_and_imbalance():
    g = GridRegion(1, 4, 2.0)
    x = CountField(g, [30, 4, 3, 3])
    p = AimParams(1.0, (0.5,))
    lam = conditional_intensity(p, [x])
    np.testing.assert_allclose(lam.cell_means, 1.0 * 2.0 + 0.5 * np.array([30, 4, 3, 3]))
    src = build_zone_system(g, ["a", "a", "b", "b"])
    tab = imbalance_table(p, src, x)
    assert [t.zone_id for t in tab] == ["a", "b"]
    assert tab[0].expected == pytest.approx(4.0 + 17.0)


@settings(max_examples=30)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=2))
def test_piecewise_intensity(levels):
    g = GridRegion(2, 2)
    cz = build_zone_system(g, ["u", "u", "v", "v"], "control")
    f = piecewise_intensity(PiecewiseModel(cz, tuple(levels)))
    np.testing.assert_array_equal(f.values, [levels[0]] * 2 + [levels[1]] * 2)
