from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import quarts.bootstrap as bs
from quarts.ar import simulate_stationary
from quarts.bootstrap import (
    BootstrapError,
    bootstrap_coefficients,
    bootstrap_paths,
    coefficient_pvalues,
    percentile_bands,
    sign_pvalues,
)
from quarts.engine import quarts_fit
from quarts.innovation import InnovationDistribution, estimate_innovation_distribution
from quarts.pcqr import fit_pca
from quarts.rng import make_rng


def setup(seed=0, n=150, q=1, phi=0.5, m=20):
    rng = make_rng(seed)
    Xr = rng.standard_normal((n + m, 2))
    X = np.column_stack([np.ones(n + m), Xr])
    y = X[:n] @ [1.0, 2.0, -1.0] + simulate_stationary([phi] if q else [], rng.standard_normal(n + 500))
    model = quarts_fit(y, X[:n], q, 0.5)
    dist = estimate_innovation_distribution(model)
    return model, dist, X[:n], X[n:], y


@pytest.fixture(scope="module")
def fitted():
    return setup()


class TestDegenerate:
    def test_zero_variance_q0(self):
        model, _, X, _, _ = setup(1, q=0)
        dist = InnovationDistribution("gaussian", mu=0.0, sigma_naive=0.0, tau=0.5)
        ens = bootstrap_coefficients(model, dist, X, B=20)
        np.testing.assert_allclose(ens.betas, np.tile(model.beta, (20, 1)), atol=1e-9)

    def test_zero_variance_q1_beta(self):
        model, _, X, _, _ = setup(2, q=1)
        dist = InnovationDistribution("gaussian", mu=0.0, sigma_naive=0.0, tau=0.5)
        ens = bootstrap_coefficients(model, dist, X, B=10)
        np.testing.assert_allclose(ens.betas, np.tile(model.beta, (10, 1)), atol=1e-9)
        inf = coefficient_pvalues(ens, model.beta)
        np.testing.assert_allclose(inf.sd, 0.0, atol=1e-9)


class TestEnsemble:
    def test_same_seed_identical(self, fitted):
        model, dist, X, _, _ = fitted
        a = bootstrap_coefficients(model, dist, X, B=30, seed=7)
        b = bootstrap_coefficients(model, dist, X, B=30, seed=7)
        assert a.betas.tobytes() == b.betas.tobytes() and a.phis.tobytes() == b.phis.tobytes()
        c = bootstrap_coefficients(model, dist, X, B=30, seed=8)
        assert not np.array_equal(a.betas, c.betas)

    def test_thread_order_invariance(self, fitted):
        model, dist, X, Xf, y = fitted
        a = bootstrap_paths(model, dist, X, Xf, y, B=24, seed=3)
        with ThreadPoolExecutor(4) as ex:
            b = bootstrap_paths(model, dist, X, Xf, y, B=24, seed=3, executor=ex)
        assert a.paths.tobytes() == b.paths.tobytes()
        assert a.betas.tobytes() == b.betas.tobytes()

    def test_prefix_stable(self, fitted):
        # replication b uses its own substream, so a larger B extends a smaller one
        model, dist, X, _, _ = fitted
        a = bootstrap_coefficients(model, dist, X, B=10, seed=4)
        b = bootstrap_coefficients(model, dist, X, B=20, seed=4)
        np.testing.assert_array_equal(a.betas, b.betas[:10])

    def test_shapes_and_summary(self, fitted):
        model, dist, X, Xf, y = fitted
        ens = bootstrap_paths(model, dist, X, Xf, y, B=40, seed=5)
        assert ens.paths.shape == ens.quantile_paths.shape == (40, Xf.shape[0])
        assert ens.quantile_in_sample.shape == (40, X.shape[0])
        assert ens.summary()["replications_kept"] == 40 and ens.n_ok == 40

    def test_spread_tracks_sampling_sd(self, fitted):
        model, dist, X, _, _ = fitted
        ens = bootstrap_coefficients(model, dist, X, B=200, seed=6)
        sd = ens.phis[:, 0].std(ddof=1)
        # asymptotic SD of an AR(1) coefficient is sqrt((1 - phi^2) / n)
        assert sd == pytest.approx(np.sqrt((1 - 0.25) / 150), rel=0.35)

    def test_quantile_band_narrower_than_prediction(self, fitted):
        model, dist, X, Xf, y = fitted
        ens = bootstrap_paths(model, dist, X, Xf, y, B=200, seed=9)
        plo, phi_ = ens.bands("prediction")
        qlo, qhi = ens.bands("conditional_quantile")
        assert np.all(qhi - qlo < phi_ - plo)

    def test_bands_need_paths(self, fitted):
        model, dist, X, _, _ = fitted
        ens = bootstrap_coefficients(model, dist, X, B=5)
        with pytest.raises(ValueError):
            ens.bands()
        with pytest.raises(ValueError):
            ens.bands("mean")

    def test_invalid_B(self, fitted):
        model, dist, X, _, _ = fitted
        with pytest.raises(ValueError):
            bootstrap_coefficients(model, dist, X, B=0)


class TestFailures:
    def _flaky(self, monkeypatch, every):
        real = bs.fit_model
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] % every == 0:
                raise RuntimeError("synthetic refit failure")
            return real(*args, **kwargs)

        monkeypatch.setattr(bs, "fit_model", flaky)

    def test_over_limit_raises(self, fitted, monkeypatch):
        model, dist, X, _, _ = fitted
        self._flaky(monkeypatch, 10)
        with pytest.raises(BootstrapError) as err:
            bootstrap_coefficients(model, dist, X, B=50)
        assert len(err.value.failures) == 5

    def test_under_limit_logged(self, fitted, monkeypatch):
        model, dist, X, _, _ = fitted
        self._flaky(monkeypatch, 50)
        ens = bootstrap_coefficients(model, dist, X, B=50)
        assert len(ens.failures) == 1 and ens.n_ok == 49
        assert "replication 49" in ens.failures[0]


class TestInference:
    def test_pvalue_floor(self):
        draws = np.ones((500, 2))
        np.testing.assert_allclose(sign_pvalues(draws), 2 / 500)
        assert sign_pvalues(draws)[0] == pytest.approx(0.004)

    def test_pvalue_symmetric(self):
        draws = np.linspace(-1, 1, 101)[:, None]
        assert sign_pvalues(draws)[0] == pytest.approx(1.0)

    def test_percentile_bands(self):
        P = np.arange(101.0)[:, None] * np.ones((1, 3))
        lo, hi = percentile_bands(P, 0.1)
        np.testing.assert_allclose(lo, 5.0)
        np.testing.assert_allclose(hi, 95.0)

    def test_proxy_basis_map(self):
        rng = make_rng(10)
        n = 200
        Xr = rng.standard_normal((n, 4)) * [1, 2, 3, 4] + 5
        pca = fit_pca(Xr)
        D = pca.design(Xr, 2)
        y = D @ [0.5, 1.0, -0.5] + rng.standard_normal(n)
        model = quarts_fit(y, D, 0, 0.5)
        dist = estimate_innovation_distribution(model)
        ens = bootstrap_coefficients(model, dist, D, B=40, k=2)
        inf = coefficient_pvalues(ens, model.beta, pca=pca, names=["intercept", "a", "b", "c", "d"])
        assert inf.basis == "proxy" and len(inf.estimate) == 5
        np.testing.assert_allclose(inf.estimate, pca.proxy_coefficients(model.beta))
        np.testing.assert_allclose(inf.estimate[0] + Xr @ inf.estimate[1:], D @ model.beta, atol=1e-9)
        rows = list(inf.rows())
        assert rows[1]["name"] == "a" and set(rows[0]) == {"name", "estimate", "sd", "lower", "upper", "p_value"}
        raw = coefficient_pvalues(ens, model.beta)
        assert raw.basis == "principal-component" and len(raw.estimate) == 3
