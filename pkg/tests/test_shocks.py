import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from distreg.basis import FunctionOnGrid, Grid, make_basis, project, reconstruct, trapezoid_weights
from distreg.density import DensityEstimate, density_mean, density_stats
from distreg.errors import (
    BandwidthNonPositive,
    EmptyInterval,
    GridMismatch,
    NegativePath,
    OutOfSupport,
)
from distreg.estimator import PredictorSeries, apply, fit
from distreg.shocks import (
    ObservedShock,
    benchmark_response,
    evaluate_shocks,
    fraction_shocks,
    kernel_perturbation,
    observed_shock,
    quantile_step_shock,
    transform_domain_shocks,
)
from distreg.transforms import clr

TEMP = Grid(-20.0, 40.0, 0.1)
W = trapezoid_weights(TEMP)


def normal_density(mu, sd, grid=TEMP):
    return DensityEstimate.normalized(grid, stats.norm.pdf(grid.points, mu, sd))


NORM = normal_density(12.0, 8.0)
COLD = normal_density(4.0, 6.0)


def noiseless_model(basis, slope, T=60, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(T, basis.size))
    return fit(x @ slope + 0.01 * rng.normal(size=T), PredictorSeries(x, basis), PredictorSeries(x, basis))


def test_observed_shock_examples():
    s = observed_shock(NORM, NORM)
    np.testing.assert_array_equal(s.delta.values, 0.0)
    s = observed_shock(NORM, COLD)
    assert abs(s.delta.integral()) < 1e-6
    np.testing.assert_array_equal(s.delta.values, COLD.values - NORM.values)
    p = TEMP.points
    assert np.all(s.delta.values[(p > -5) & (p < 5)] > 0)  # cold side gains mass
    assert np.all(s.delta.values[(p > 15) & (p < 30)] < 0)  # warm side loses it
    with pytest.raises(GridMismatch):
        observed_shock(NORM, normal_density(0, 1, Grid(-5, 5, 0.1)))


def test_fraction_endpoints_and_mean_path():
    s = observed_shock(NORM, COLD)
    path = fraction_shocks(s, 4)
    assert len(path) == 4
    np.testing.assert_allclose(path[-1].values, COLD.values, atol=1e-10)
    slope = float(W @ (TEMP.points * s.delta.values))  # d mean / d a
    for k, d in enumerate(path, start=1):
        assert d.f.integral() == pytest.approx(1.0, abs=1e-12)
        assert density_mean(d) == pytest.approx(density_mean(NORM) + (k / 4) * slope, abs=1e-8)


def test_fraction_variances_monotone_for_same_mean_pair():
    wide = normal_density(12.0, 11.0)
    path = fraction_shocks(observed_shock(NORM, wide), 3)
    v = [density_stats(d).variance for d in path]
    assert density_stats(NORM).variance < v[0] < v[1] < v[2]


def test_fraction_shock_negative_path():
    doubled = ObservedShock(NORM, COLD, 2.0 * (COLD.f - NORM.f))
    with pytest.raises(NegativePath, match="a=1"):
        fraction_shocks(doubled, 2)
    with pytest.raises(ValueError):
        fraction_shocks(observed_shock(NORM, COLD), 0)


def test_transform_domain_shocks_clr():
    basis = make_basis("fourier", 41, TEMP, includes_constant=False)
    s = observed_shock(NORM, COLD)
    path = fraction_shocks(s, 3)
    series = transform_domain_shocks(path, NORM, "clr", basis, eps=1e-3)
    np.testing.assert_array_equal(series.fractions, [1 / 3, 2 / 3, 1.0])
    for f in series.functions:
        assert abs(f.integral()) < 1e-6
    g = np.log(COLD.values + 1e-3) - np.log(NORM.values + 1e-3)
    direct = g - float(W @ g) / TEMP.length
    np.testing.assert_allclose(series.functions[-1].values, direct, atol=1e-8)
    endpoint = clr(COLD, 1e-3).f - clr(NORM, 1e-3).f
    np.testing.assert_allclose(series.functions[-1].values, endpoint.values, atol=1e-8)

    same = transform_domain_shocks([NORM, NORM], NORM, "clr", basis)
    for z in same.zetas:
        np.testing.assert_array_equal(z.coeffs, 0.0)


@pytest.mark.parametrize("kind", ["lhr", "lrhr", "quantile"])
def test_transform_domain_shocks_other_kinds(kind):
    grid = Grid.unit(601) if kind == "quantile" else TEMP
    basis = make_basis("legendre", 10, grid)
    series = transform_domain_shocks(fraction_shocks(observed_shock(NORM, COLD), 2), NORM, kind, basis)
    assert series.transform == kind
    assert all(np.all(np.isfinite(z.coeffs)) for z in series.zetas)
    if kind == "quantile":
        # colder event pulls every quantile down
        assert np.all(series.functions[-1].values[10:-10] < 0)


def test_shock_responses_are_additive_and_ignore_constants():
    basis = make_basis("fourier", 21, TEMP, includes_constant=False)
    m = noiseless_model(basis, np.linspace(1, -1, 21))
    series = transform_domain_shocks(fraction_shocks(observed_shock(NORM, COLD), 2), NORM, "clr", basis)
    a, b = series.zetas
    assert apply(m, a + b) == pytest.approx(apply(m, a) + apply(m, b), abs=1e-10)
    f = series.functions[0]
    assert apply(m, f + 3.0) == pytest.approx(apply(m, f), abs=1e-10)

    evaluated = evaluate_shocks(m, series)
    rows = evaluated.rows()
    assert [r["a"] for r in rows] == [0.5, 1.0]
    assert evaluated.to_csv().splitlines()[0] == "a,estimate,std_error,ci_low,ci_high"


def test_identical_periods_give_zero_response():
    basis = make_basis("legendre", 6, TEMP)
    m = noiseless_model(basis, np.ones(6))
    series = transform_domain_shocks(fraction_shocks(observed_shock(NORM, NORM), 3), NORM, "clr", basis)
    for z in series.zetas:
        assert apply(m, z) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(-20, 40), h=st.floats(0.05, 30))
def test_kernel_perturbation_has_unit_mass(s, h):
    k = kernel_perturbation(s, h, TEMP)
    assert k.integral() == pytest.approx(1.0, abs=1e-8)
    assert np.all(k.values >= 0)


def test_kernel_perturbation_symmetry_and_errors():
    k = kernel_perturbation(10.0, 15.0, TEMP)
    np.testing.assert_allclose(k.values, k.values[::-1], atol=1e-10)
    with pytest.raises(OutOfSupport):
        kernel_perturbation(41.0, 15.0, TEMP)
    with pytest.raises(BandwidthNonPositive):
        kernel_perturbation(0.0, 0.0, TEMP)


def test_narrow_kernel_recovers_slope_pointwise():
    basis = make_basis("legendre", 6, TEMP)
    slope = np.array([0.3, 1.0, -0.5, 0.25, 0.1, 0.0])
    m = noiseless_model(basis, slope, T=80)
    phi = reconstruct(m.slope)
    for s in (-10.0, 0.0, 12.3, 30.0):
        got = apply(m, kernel_perturbation(s, 0.2 * TEMP.step, TEMP))
        want = float(np.interp(s, TEMP.points, phi.values))
        assert got == pytest.approx(want, rel=0.02)


def test_benchmark_response_of_constant_slope_is_flat():
    basis = make_basis("legendre", 4, TEMP)
    const = project(FunctionOnGrid.constant(TEMP, 0.7), basis).coeffs
    m = noiseless_model(basis, const)
    curve = benchmark_response(m, np.arange(-15.0, 36.0, 5.0), h=15.0)
    np.testing.assert_allclose(curve.estimates, 0.7, atol=2e-3)
    for r in curve.results:
        assert r.ci_low <= 0.7 + 2e-3 and r.ci_high >= 0.7 - 2e-3
    assert curve.to_csv().splitlines()[0] == "s,estimate,std_error,ci_low,ci_high"
    assert len(curve.rows()) == 11


def test_quantile_step_examples():
    f = quantile_step_shock(0.5, 1.0, 0.5, +1)
    r = f.grid.points
    np.testing.assert_allclose(f.values[r > 0.5 + f.grid.step], 1.0)
    np.testing.assert_array_equal(f.values[r < 0.5 - f.grid.step], 0.0)
    assert f.integral() == pytest.approx(0.5, abs=1e-10)

    g = quantile_step_shock(0.55, 1.0, 0.5, +1)
    # height Q / width = 0.5 / 0.45
    assert g.values[-2] == pytest.approx(0.5 / 0.45)
    assert g.values[-2] == pytest.approx(1.11, abs=5e-3)
    assert g.integral() == pytest.approx(0.5, abs=1e-10)

    neg = quantile_step_shock(0.0, 0.2, 0.3, -1)
    assert neg.integral() == pytest.approx(-0.3, abs=1e-10)
    for lo, hi in ((0.5, 0.5), (0.7, 0.2), (-0.1, 0.5), (0.2, 1.2)):
        with pytest.raises(EmptyInterval):
            quantile_step_shock(lo, hi, 0.5)


@settings(max_examples=60, deadline=None)
@given(
    lo=st.floats(0, 0.99),
    width=st.floats(1e-4, 1.0),
    Q=st.floats(1e-3, 10),
    sign=st.sampled_from([1, -1]),
)
def test_quantile_step_integral_property(lo, width, Q, sign):
    hi = min(1.0, lo + width)
    if hi <= lo:
        return
    f = quantile_step_shock(lo, hi, Q, sign)
    assert f.integral() == pytest.approx(sign * Q, abs=1e-10 * max(1.0, Q / (hi - lo)))
