import numpy as np
import pytest

from distreg.basis import Grid, make_basis
from distreg.errors import InvalidConfig
from distreg.estimator import PredictorSeries, fit, fit_lagged, infer
from distreg.simulation import (
    DGPConfig,
    attenuation_bias,
    bias_experiment,
    coverage_experiment,
    generate,
    rmse_experiment,
    rows_to_csv,
)


def test_no_measurement_error_means_exact_observation():
    d = generate(DGPConfig(T=50, error_scale=0.0, seed=1))
    np.testing.assert_array_equal(d.x_observed.coeffs, d.x_true.coeffs)


def test_noiseless_data_is_recovered_exactly():
    cfg = DGPConfig(T=200, n_basis=4, slope_truth=(1.0, -2.0, 0.5, 0.3), error_scale=0.0, noise_sd=0.0, seed=2)
    d = generate(cfg)
    m = fit_lagged(d.y, d.x_observed, 0)
    np.testing.assert_allclose(m.slope.coeffs, cfg.slope_truth, atol=1e-8)


def test_ar1_lag_one_autocovariance():
    cfg = DGPConfig(T=100_000, n_basis=1, slope_truth=(1.0,), ar_coeff=0.8, spectrum_scale=2.0, seed=3)
    xi = generate(cfg).x_true.coeffs[:, 0]
    c = xi - xi.mean()
    var = np.mean(c**2)
    lag1 = np.mean(c[1:] * c[:-1])
    assert var == pytest.approx(2.0, rel=0.05)
    assert lag1 == pytest.approx(0.8 * var, rel=0.05)


def test_spectrum_and_error_scale():
    cfg = DGPConfig(T=50_000, n_basis=3, spectrum_decay=2.0, error_scale=0.4, seed=4)
    d = generate(cfg)
    np.testing.assert_allclose(d.x_true.coeffs.var(axis=0), [1.0, 0.25, 1 / 9], rtol=0.06)
    e = d.x_observed.coeffs - d.x_true.coeffs
    np.testing.assert_allclose(e.std(axis=0), 0.4, rtol=0.03)
    # measurement error is serially uncorrelated
    assert abs(np.corrcoef(e[1:, 0], e[:-1, 0])[0, 1]) < 0.02


def test_seeded_generation_is_bitwise_reproducible():
    cfg = DGPConfig(T=100, seed=99)
    a, b = generate(cfg, rep=5), generate(cfg, rep=5)
    assert a.y.tobytes() == b.y.tobytes()
    assert a.x_observed.coeffs.tobytes() == b.x_observed.coeffs.tobytes()
    assert generate(cfg, rep=6).y.tobytes() != a.y.tobytes()


def test_config_validation_and_roundtrip():
    for bad in (
        dict(T=10),
        dict(ar_coeff=1.0),
        dict(spectrum_scale=0.0),
        dict(error_scale=-1.0),
        dict(slope_truth=(1.0,)),
    ):
        with pytest.raises(InvalidConfig):
            DGPConfig(**bad)
    grid = Grid(-20.0, 40.0, 0.1)
    cfg = DGPConfig(n_basis=3, basis=make_basis("legendre", 3, grid), seed=8)
    back = DGPConfig.from_dict(cfg.to_dict())
    assert back == cfg and back.basis.same_as(cfg.basis)
    assert "PCG64" in cfg.to_dict()["generator"]
    with pytest.raises(InvalidConfig):
        DGPConfig.from_dict({**cfg.to_dict(), "extra": 1})


def test_scalar_pipeline_matches_closed_form_iv():
    cfg = DGPConfig(T=300, n_basis=1, slope_truth=(1.5,), error_scale=0.4, seed=5)
    d = generate(cfg)
    m = fit_lagged(d.y, d.x_observed, 1)
    x = d.x_observed.coeffs[1:, 0]
    z = d.x_observed.coeffs[:-1, 0]
    y = d.y[1:]
    zc, xc, yc = z - z.mean(), x - x.mean(), y - y.mean()
    assert m.slope.coeffs[0] == pytest.approx((zc @ yc) / (zc @ xc), rel=1e-10)


def test_iv_is_consistent_where_naive_is_not():
    cfg = DGPConfig(T=2000, error_scale=0.5, noise_sd=0.3, seed=6)
    d = generate(cfg)
    truth = np.asarray(cfg.slope_truth)
    iv = fit_lagged(d.y, d.x_observed, 1)
    naive = fit_lagged(d.y, d.x_observed, 0)
    assert np.linalg.norm(iv.slope.coeffs - truth) < 0.1
    assert np.linalg.norm(naive.slope.coeffs - truth) > 0.1


def test_attenuation_formula():
    cfg = DGPConfig(n_basis=1, slope_truth=(2.0,), spectrum_scale=1.0, error_scale=0.5)
    assert attenuation_bias(cfg) == pytest.approx(-2.0 * 0.25 / 1.25)
    with pytest.raises(InvalidConfig):
        attenuation_bias(DGPConfig())


def test_bias_without_endogeneity():
    cfg = DGPConfig(T=300, error_scale=0.0, seed=7)
    for row in bias_experiment(cfg, [300], reps=100):
        assert abs(row["bias"]) < 2 * row["mc_se"]


def test_bias_with_measurement_error():
    cfg = DGPConfig(T=500, n_basis=1, slope_truth=(1.0,), error_scale=0.5, ar_coeff=0.8, seed=8)
    naive, iv = bias_experiment(cfg, [500], reps=100)
    assert naive["kappa"] == 0 and iv["kappa"] == 1
    assert abs(naive["bias"]) > 3 * naive["mc_se"]
    assert naive["bias"] == pytest.approx(attenuation_bias(cfg), rel=0.1)
    assert abs(iv["bias"]) < abs(naive["bias"])
    with pytest.raises(InvalidConfig):
        bias_experiment(cfg, [500], reps=50)


def test_bias_shrinks_with_sample_size():
    cfg = DGPConfig(error_scale=0.5, seed=4)
    small, large = bias_experiment(cfg, [500, 4000], reps=200, kappas=(1,))
    assert abs(large["bias"]) <= abs(small["bias"])
    assert large["mc_se"] < small["mc_se"]


def test_coverage_at_half_level():
    res = coverage_experiment(DGPConfig(T=1000, error_scale=0.3, seed=9), reps=500, level=0.5)
    assert 0.45 <= res.rate <= 0.55


def test_noiseless_coverage_is_complete():
    cfg = DGPConfig(T=100, error_scale=0.0, noise_sd=0.0, seed=10)
    res = coverage_experiment(cfg, reps=500, kappa=0)
    assert res.rate == 1.0 and res.skipped == 0


def test_interval_width_scales_with_root_t():
    widths = {}
    for T in (500, 2000):
        w = []
        for rep in range(40):
            d = generate(DGPConfig(T=T, error_scale=0.3, seed=11), rep)
            r = infer(fit_lagged(d.y, d.x_observed, 1), np.eye(3)[0])
            w.append(r.ci_high - r.ci_low)
        widths[T] = np.mean(w)
    assert 1.8 <= widths[500] / widths[2000] <= 2.2


def test_rmse_tendency_and_csv():
    means = rmse_experiment(DGPConfig(T=300, error_scale=0.5, seed=12), reps=50)
    assert means[0] < means[1]
    text = rows_to_csv([{"T": 1, "kappa": 0, "bias": 0.5}])
    assert text.splitlines() == ["T,kappa,bias", "1,0,0.5"]


def test_parallel_workers_match_serial():
    cfg = DGPConfig(T=100, error_scale=0.3, seed=13)
    a = bias_experiment(cfg, [100], reps=100)
    b = bias_experiment(cfg, [100], reps=100, workers=2)
    assert a == b


def test_basis_is_attached_to_generated_series():
    basis = make_basis("fourier", 3, Grid(0.0, 1.0, 0.01))
    d = generate(DGPConfig(T=30, basis=basis))
    assert isinstance(d.x_observed, PredictorSeries) and d.x_observed.basis is basis
    m = fit(d.y, d.x_observed, d.x_observed)
    assert m.basis is basis
