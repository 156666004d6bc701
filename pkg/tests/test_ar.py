import numpy as np
import pytest

from quarts.ar import (
    ARCoefficients,
    NonStationaryError,
    lag_matrix,
    propagate_mean,
    quasi_difference,
    simulate_stationary,
    undifference,
)
from quarts.rng import make_rng
from quarts.stats import acf


def test_quasi_difference_identity():
    s = np.array([3.0, 1.0, 4.0])
    np.testing.assert_array_equal(quasi_difference(s, []), s)


def test_quasi_difference_example():
    np.testing.assert_allclose(quasi_difference(np.array([1.0, 2, 3, 4]), [0.5]), [1.5, 2.0, 2.5])


def test_quasi_difference_constant():
    out = quasi_difference(np.full(10, 2.0), [0.3, -0.1, 0.2])
    np.testing.assert_allclose(out, 2.0 * (1 - 0.4))


def test_quasi_difference_matrix_columnwise():
    M = make_rng(1).standard_normal((12, 3))
    out = quasi_difference(M, [0.4, 0.2])
    for j in range(3):
        np.testing.assert_allclose(out[:, j], quasi_difference(M[:, j], [0.4, 0.2]))


def test_quasi_difference_too_short():
    with pytest.raises(ValueError):
        quasi_difference(np.array([1.0, 2.0]), [0.1, 0.2])


def test_undifference_roundtrip():
    s = make_rng(2).standard_normal(50)
    phi = [0.5, -0.3, 0.1]
    back = undifference(quasi_difference(s, phi), s[:3], phi)
    np.testing.assert_allclose(back, s, atol=1e-12)


def test_stationarity():
    assert ARCoefficients([0.99]).is_stationary
    assert not ARCoefficients([1.0]).is_stationary
    assert ARCoefficients([0.5, 0.3]).is_stationary
    assert not ARCoefficients([0.7, 0.4]).is_stationary
    assert ARCoefficients([]).is_stationary


def test_simulate_q0():
    d = np.arange(10.0)
    np.testing.assert_array_equal(simulate_stationary([], d, burn_in=3), d[3:])


def test_simulate_rejects_unit_root():
    with pytest.raises(NonStationaryError):
        simulate_stationary([1.0], np.zeros(10), burn_in=0)
    simulate_stationary([0.99], np.zeros(10), burn_in=0)


def test_simulate_ar1_variance():
    d = make_rng(3).standard_normal(100500)
    e = simulate_stationary([0.5], d, burn_in=500)
    assert e.size == 100000
    assert e.var() == pytest.approx(4 / 3, rel=0.05)
    se = np.sqrt((1 - 0.25) / e.size)
    assert abs(acf(e, 1)[1] - 0.5) < 3 * se * 3


def test_simulate_recursion():
    d = np.array([1.0, 0.0, 0.0, 2.0])
    np.testing.assert_allclose(simulate_stationary([0.5], d, burn_in=0), [1.0, 0.5, 0.25, 2.125])


def test_propagate_q0():
    np.testing.assert_allclose(propagate_mean([], [], 4, mu_delta=0.3), [0.3] * 4)


def test_propagate_geometric():
    np.testing.assert_allclose(propagate_mean([0.5], [1.0], 3), [0.5, 0.25, 0.125])


@pytest.mark.parametrize("phi", [[0.5], [0.6, 0.2], [0.3, -0.2, 0.1]])
def test_propagate_fixed_point(phi):
    out = propagate_mean(phi, np.ones(len(phi)), 500, mu_delta=0.2)
    assert out[-1] == pytest.approx(0.2 / (1 - sum(phi)), abs=1e-6)


def test_propagate_decay_bound():
    phi = ARCoefficients([0.6, 0.3])
    out = propagate_mean(phi, [1.0, -1.0], 200)
    r = phi.max_modulus + 0.01
    h = np.arange(1, 201)
    C = np.max(np.abs(out) / r ** h)
    assert np.all(np.abs(out[50:]) <= C * r ** h[50:])
    assert abs(out[-1]) < 1e-6


def test_propagate_requires_q_values():
    with pytest.raises(ValueError):
        propagate_mean([0.5, 0.1], [1.0], 3)


def test_propagate_rejects_nonstationary():
    with pytest.raises(NonStationaryError):
        propagate_mean([1.2], [1.0], 3)


def test_lag_matrix():
    e = np.arange(6.0)
    np.testing.assert_array_equal(lag_matrix(e, 2, np.array([2, 3])), [[1, 0], [2, 1]])
