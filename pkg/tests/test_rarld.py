import numpy as np
import pytest

from quarts.ar import simulate_stationary
from quarts.rarld import RarldError, build_design, rarld
from quarts.rng import make_rng


def data(seed, phi, n=1500, p=2, laplace=True):
    rng = make_rng(seed)
    X = rng.standard_normal((n, p))
    d = rng.laplace(size=n + 500) if laplace else rng.standard_normal(n + 500)
    return 1.0 + X @ np.ones(p) + simulate_stationary(list(phi), d), X


def test_iid_selects_zero():
    qs = [rarld(*data((1, s), [], n=300)).q for s in range(30)]
    assert np.mean(np.array(qs) == 0) >= 0.9


def test_ar1_selects_one():
    qs = [rarld(*data((2, s), [0.6], n=1500)).q for s in range(10)]
    assert np.mean(np.array(qs) == 1) >= 0.8


def test_ar2_selects_two():
    qs = [rarld(*data((3, s), [0.5, 0.3], n=1500)).q for s in range(10)]
    assert np.mean(np.array(qs) == 2) >= 0.7


def test_trail_and_passing_innovations():
    res = rarld(*data(4, [0.6], n=600))
    assert len(res.diagnostics) == res.q + 1
    assert all(d.ar_behavior_detected for d in res.diagnostics[:-1])
    assert res.diagnostics[-1].lb_pvalue >= 0.05
    assert res.model.q == res.q


def test_deterministic():
    y, X = data(5, [0.5], n=400)
    a, b = rarld(y, X), rarld(y, X)
    assert a.q == b.q and a.model.beta.tobytes() == b.model.beta.tobytes()


def test_exceeding_max_q_raises_with_trail():
    y, X = data(6, [0.9, -0.5, 0.3], n=1500, laplace=False)
    with pytest.raises(RarldError) as err:
        rarld(y, X, max_q=0)
    assert len(err.value.diagnostics) == 1


def test_gls_fitter():
    res = rarld(*data(7, [0.6], n=800, laplace=False), fitter="gls")
    assert res.q == 1 and res.model.fitter == "gls"


def test_auto_k_reselects_per_q():
    rng = make_rng(8)
    n = 300
    X = rng.standard_normal((n, 8))
    y = 1 + X[:, :3].sum(axis=1) + simulate_stationary([0.6], rng.standard_normal(n + 500))
    res = rarld(y, X, auto_k=True, k_max=6)
    assert len(res.k_per_q) == res.q + 1 == len(res.cv_reports)
    assert res.k == res.k_per_q[-1] >= 3
    assert res.design.shape[1] == res.k + 1
    assert res.as_dict()["q"] == res.q


def test_build_design_raw():
    X = np.arange(12.0).reshape(6, 2)
    D, pca = build_design(X, None)
    assert pca is None and np.all(D[:, 0] == 1) and D.shape == (6, 3)
