import numpy as np
import pytest

from oracle import exhaustive_qr_min, lp_qr_objective, random_instance, rho
from quarts.qr import RankDeficientError, optimality_certificate, qr_fit, qr_fit_no_intercept, solve_qr
from quarts.rng import make_rng

# objectives from scipy linprog (HiGHS) on the deterministic instance below
_J = np.arange(15)
X15 = np.column_stack([np.ones(15), np.cos(1.7 * _J), np.sin(0.37 * _J * _J)])
Y15 = 1.0 + 2.0 * X15[:, 1] - X15[:, 2] + np.sin(3.1 * _J) ** 3
ORACLE_LP = {0.1: 0.18551353224795428, 0.3: 0.3320798667664041,
             0.5: 0.350669744143721, 0.9: 0.15116669179745648}


def test_median():
    fit = qr_fit(np.array([1.0, 2, 3, 4, 5]), np.ones((5, 1)), 0.5)
    assert fit.beta[0] == pytest.approx(3.0)
    assert fit.objective == pytest.approx(3.0)
    assert fit.status == "optimal"


def test_two_points_interpolated():
    X = np.array([[1.0, 0.0], [1.0, 2.0]])
    fit = qr_fit(np.array([1.0, 5.0]), X, 0.3)
    np.testing.assert_allclose(fit.beta, [1.0, 2.0])
    assert fit.objective == pytest.approx(0.0, abs=1e-12)


def test_lower_quartile_bruteforce():
    y = np.array([1.0, 2, 3, 4])
    fit = qr_fit(y, np.ones((4, 1)), 0.25)
    brute = min(float(np.sum(rho(y - c, 0.25))) for c in y)
    assert brute == pytest.approx(1.5)
    assert fit.objective == pytest.approx(1.5, abs=1e-8)


@pytest.mark.parametrize("tau", sorted(ORACLE_LP))
def test_lp_oracle(tau):
    fit = qr_fit(Y15, X15, tau)
    assert fit.objective == pytest.approx(ORACLE_LP[tau], abs=1e-10)
    assert optimality_certificate(X15, fit.residuals, tau)


def test_objective_recomputable():
    fit = qr_fit(Y15, X15, 0.3)
    assert fit.objective == float(np.sum(rho(Y15 - X15 @ fit.beta, 0.3)))
    np.testing.assert_array_equal(fit.residuals, Y15 - X15 @ fit.beta)


def test_vertex_property():
    fit = qr_fit(Y15, X15, 0.5)
    assert fit.n_zero_residuals >= X15.shape[1]
    assert fit.basis.size == X15.shape[1]


def test_no_intercept_exact():
    x = np.array([0.5, -1.0, 2.0, 3.0, -0.7])
    fit = qr_fit_no_intercept(2.0 * x, x[:, None], 0.4)
    assert fit.beta[0] == pytest.approx(2.0)
    assert fit.objective == pytest.approx(0.0, abs=1e-12)


def test_no_intercept_lagged_self_bruteforce():
    e = make_rng(4).standard_normal(9)
    y, x = e[1:], e[:-1]
    fit = qr_fit_no_intercept(y, x[:, None], 0.5)
    brute = min(float(np.sum(rho(y - (yi / xi) * x, 0.5))) for xi, yi in zip(x, y))
    assert fit.objective == pytest.approx(brute, abs=1e-10)


def test_no_intercept_certificate_on_noise():
    rng = make_rng(9)
    x = rng.standard_normal(30)
    y = rng.standard_normal(30) * np.sign(x)
    fit = qr_fit_no_intercept(y, x[:, None], 0.5)
    assert np.all(np.isfinite(fit.beta))
    assert optimality_certificate(x[:, None], fit.residuals, 0.5)


def test_rank_deficient_names_columns():
    rng = make_rng(1)
    z = rng.standard_normal(10)
    X = np.column_stack([np.ones(10), z, 2 * z])
    with pytest.raises(RankDeficientError) as err:
        qr_fit(rng.standard_normal(10), X, 0.5)
    assert err.value.columns in ([1], [2])


def test_too_few_rows():
    with pytest.raises(ValueError):
        qr_fit(np.array([1.0]), np.array([[1.0, 2.0]]), 0.5)


def test_intercept_column_required():
    with pytest.raises(ValueError, match="intercept"):
        qr_fit(np.arange(4.0), np.arange(8.0).reshape(4, 2), 0.5)


@pytest.mark.parametrize("seed", range(40))
def test_exhaustive_oracle(seed):
    rng = make_rng((100, seed))
    n = int(rng.integers(4, 13))
    p = int(rng.integers(0, 3))
    y, X, tau = random_instance(rng, n, p)
    assert qr_fit(y, X, tau).objective == pytest.approx(exhaustive_qr_min(y, X, tau), abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_lad_matches_lp(seed):
    y, X, _ = random_instance(make_rng((200, seed)), 60, 3)
    assert qr_fit(y, X, 0.5).objective == pytest.approx(lp_qr_objective(y, X, 0.5)[0], abs=1e-8)


def test_counting_property():
    y, X, _ = random_instance(make_rng(3), 80, 2)
    for tau in (0.1, 0.5, 0.8):
        r = qr_fit(y, X, tau).residuals
        tiny = 1e-9 * np.max(np.abs(r))
        assert np.sum(r < -tiny) <= tau * r.size
        assert np.sum(r > tiny) <= (1 - tau) * r.size


def test_equivariance():
    y, X, _ = random_instance(make_rng(6), 40, 2)
    base = qr_fit(y, X, 0.3)
    scaled = qr_fit(3.0 * y, X, 0.3)
    assert scaled.objective == pytest.approx(3.0 * base.objective, rel=1e-10)
    shifted = qr_fit(y + 5.0, X, 0.3)
    assert shifted.objective == pytest.approx(base.objective, abs=1e-8)
    if np.allclose(np.sort(shifted.basis), np.sort(base.basis)):
        assert shifted.beta[0] == pytest.approx(base.beta[0] + 5.0, abs=1e-8)
        np.testing.assert_allclose(shifted.beta[1:], base.beta[1:], atol=1e-8)


def test_warm_start_same_answer():
    y, X, _ = random_instance(make_rng(12), 100, 4)
    beta, h, _, _ = solve_qr(X, y, 0.4)
    y2 = y + 0.01 * make_rng(13).standard_normal(100)
    cold = solve_qr(X, y2, 0.4)
    warm = solve_qr(X, y2, 0.4, basis=h)
    obj = lambda b: float(np.sum(rho(y2 - X @ b, 0.4)))
    assert obj(warm[0]) == pytest.approx(obj(cold[0]), abs=1e-9)


def test_large_scale_data():
    y, X, _ = random_instance(make_rng(21), 50, 2)
    big = qr_fit(1e6 * y, X, 0.5)
    small = qr_fit(y, X, 0.5)
    assert big.objective == pytest.approx(1e6 * small.objective, rel=1e-9)
