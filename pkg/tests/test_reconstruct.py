import numpy as np
import pytest

from quarts.data import generate_synthetic_panel
from quarts.reconstruct import ReconstructConfig, fit_quantile_family, reconstruct


def cfg(**kw):
    base = dict(q=1, use_pca=False, bootstrap=100, correct_sigma=False, seed=1)
    base.update(kw)
    return ReconstructConfig(**base)


@pytest.fixture(scope="module")
def panel():
    return generate_synthetic_panel(n=120, m=30, p=3, phi=[0.6], seed=2)[0]


@pytest.fixture(scope="module")
def result(panel):
    return reconstruct(panel, cfg())


def test_shape_and_order(panel, result):
    assert len(result) == 150
    np.testing.assert_array_equal(result.time, panel.time)
    np.testing.assert_array_equal(result.in_sample, panel.calibration)
    assert np.all(result.lower <= result.point) and np.all(result.point <= result.upper)
    assert np.all(np.isfinite(result.smoothed_point))


def test_metadata(result):
    meta = result.metadata
    assert meta["q"] == 1 and meta["k"] is None and meta["hindcast"]
    assert meta["B"] == 100 and meta["bootstrap"]["replications_kept"] >= 95
    assert meta["n_calibration"] == 120 and meta["n_reconstruction"] == 30


def test_in_sample_point_is_fitted_quantile(panel, result):
    fp = result.pipeline["fit"]
    order = panel.model_order()
    np.testing.assert_allclose(result.point[order][:120], fp.model.fitted_quantile(fp.y))


def test_out_of_sample_recursion(panel, result):
    fp = result.pipeline["fit"]
    order = panel.model_order()
    beta, phi, mu = fp.model.beta, fp.model.phi.phi[0], fp.dist.mu
    e = fp.model.residuals[-1]
    expect = []
    for x in fp.X_future:
        expect.append(x @ beta + phi * e)
        e = phi * e + mu
    np.testing.assert_allclose(result.point[order][120:], expect, atol=1e-12)


def test_time_reversal_involution(panel, result):
    rev = panel.reversed()
    np.testing.assert_array_equal(rev.reversed().proxies, panel.proxies)
    again = reconstruct(rev, cfg())
    np.testing.assert_array_equal(again.point[::-1], result.point)
    np.testing.assert_array_equal(again.upper[::-1], result.upper)


def test_forecast_orientation():
    panel = generate_synthetic_panel(n=80, m=10, p=2, hindcast=False, seed=3)[0]
    r = reconstruct(panel, cfg(bootstrap=50))
    assert not r.metadata["hindcast"]
    assert np.all(r.in_sample[:80]) and not np.any(r.in_sample[80:])


def test_no_reconstruction_rows():
    panel = generate_synthetic_panel(n=80, m=0, p=2, seed=4)[0]
    r = reconstruct(panel, cfg(bootstrap=0))
    assert len(r) == 80 and np.all(r.in_sample)
    assert np.all(r.lower < r.upper)


def test_quantile_band_width_grows_out_of_sample(panel):
    r = reconstruct(panel, cfg(band="quantile", bootstrap=200))
    order = panel.model_order()
    w = (r.upper - r.lower)[order]
    assert np.mean(w[121:]) > np.mean(w[:120])
    assert np.all(r.lower <= r.upper)


def test_single_level_family_matches(panel):
    c = cfg(bootstrap=40)
    fam = fit_quantile_family(panel, [0.5], c)
    single = reconstruct(panel, ReconstructConfig(**{**c.as_dict(), "band": "quantile"}))
    np.testing.assert_array_equal(fam.results[0.5].point, single.point)
    np.testing.assert_array_equal(fam.results[0.5].upper, single.upper)
    assert fam.crossing_fraction() == 0.0


def test_family_ordering_and_crossing(panel):
    fam = fit_quantile_family(panel, [0.9, 0.1, 0.5], cfg(bootstrap=20))
    assert fam.taus == [0.1, 0.5, 0.9] and not fam.failures
    assert fam.crossing.shape == (150,)
    assert 0.0 <= fam.crossing_fraction() <= 1.0
    assert fam.central_mask().sum() == 150 - 2 * 15


def test_deterministic_with_threads(panel, result):
    again = reconstruct(panel, cfg(threads=3))
    assert again.upper.tobytes() == result.upper.tobytes()


def test_pca_auto_k_and_coefficients():
    panel = generate_synthetic_panel(n=150, m=20, p=6, phi=[0.4], seed=5)[0]
    r = reconstruct(panel, ReconstructConfig(q=1, bootstrap=30, coef_bootstrap=30, k_max=6))
    meta = r.metadata
    assert 3 <= meta["k"] <= 6 and "cv" in meta and meta["coefficient_basis"] == "proxy"
    assert [c["name"] for c in meta["coefficients"]] == ["intercept", *panel.names]
    assert meta["innovation"]["sigma_corrected"] is not None


def test_gls_caveat(panel):
    r = reconstruct(panel, ReconstructConfig(fitter="gls", q=1, k=3, bootstrap=20, correct_sigma=False))
    assert any("optimistic" in w for w in r.metadata["warnings"])


def test_invalid_config(panel):
    with pytest.raises(ValueError):
        reconstruct(panel, ReconstructConfig(tau=1.5))
    with pytest.raises(ValueError):
        reconstruct(panel, ReconstructConfig(band="wide"))
