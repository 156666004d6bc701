import numpy as np
import pytest
from scipy.interpolate import make_smoothing_spline

from quarts.rng import make_rng
from quarts.smoothing import default_smooth_df, roughness_matrix, smooth, smoothing_spline


def series(n=60, seed=0):
    t = np.arange(n, dtype=float)
    return np.sin(t / 7.0) + 0.3 * make_rng(seed).standard_normal(n)


def test_full_df_interpolates():
    y = series()
    np.testing.assert_array_equal(smoothing_spline(y, y.size)[0], y)


def test_two_df_is_ls_line():
    y = series()
    t = np.arange(y.size)
    slope, icpt = np.polyfit(t, y, 1)
    np.testing.assert_allclose(smoothing_spline(y, 2)[0], icpt + slope * t, atol=1e-10)


@pytest.mark.parametrize("df", [3.0, 5.5, 12.0, 40.0])
def test_trace_matches_target(df):
    _, lam, tr = smoothing_spline(series(), df)
    assert abs(tr - df) < 0.1
    n = 60
    S = np.linalg.inv(np.eye(n) + lam * roughness_matrix(np.arange(n, dtype=float)))
    assert np.trace(S) == pytest.approx(df, abs=0.1)


@pytest.mark.parametrize("df", [4.0, 9.0])
def test_matches_scipy_at_same_lambda(df):
    y = series(seed=1)
    x = np.arange(y.size, dtype=float)
    fitted, lam, _ = smoothing_spline(y, df)
    ref = make_smoothing_spline(x, y, lam=lam)(x)
    np.testing.assert_allclose(fitted, ref, atol=1e-8)


def test_uneven_knots():
    x = np.cumsum(make_rng(2).uniform(0.5, 2.0, 30))
    y = np.cos(x / 5)
    fitted, lam, _ = smoothing_spline(y, 6, x=x)
    np.testing.assert_allclose(fitted, make_smoothing_spline(x, y, lam=lam)(x), atol=1e-8)


def test_linear_data_untouched():
    y = 2.0 + 0.5 * np.arange(40.0)
    np.testing.assert_allclose(smooth(y, 5), y, atol=1e-9)


def test_default_df():
    assert default_smooth_df(100) == 12
    assert default_smooth_df(10) == 2
    assert default_smooth_df(1) == 1


def test_invalid():
    with pytest.raises(ValueError):
        smoothing_spline(series(), 1.5)
    with pytest.raises(ValueError):
        smoothing_spline([1.0, 2.0], 2)
    with pytest.raises(ValueError):
        smoothing_spline([1.0, np.nan, 2.0, 3.0], 2.5)
    with pytest.raises(ValueError):
        roughness_matrix([0.0, 1.0, 1.0])
