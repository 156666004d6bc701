"""Parametric / residual bootstrap for coefficients and hindcast paths.

Each replication simulates a stationary AR residual series from the fitted
innovation law, adds it to the fitted regression, and refits with the same
fitter, lag order and design (so the number of components is fixed).
Replication ``b`` draws from the substream ``(seed, b)``, so results do not
depend on execution order or thread count.

The alternating quantile fit does not always settle within its iteration
cap (it can wander between nearby vertices). Such refits are kept at their
best-objective iterate and counted in ``nonconverged``; pass
``drop_nonconverged=True`` to discard them instead. Refits that raise or
yield non-stationary AR coefficients are always dropped, and more than 5%
dropped replications is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ar import DEFAULT_BURN_IN, ARCoefficients, simulate_stationary
from .fitting import fit_model
from .rng import draw, substream

__all__ = [
    "BootstrapEnsemble",
    "BootstrapError",
    "CoefficientInference",
    "bootstrap_coefficients",
    "bootstrap_paths",
    "coefficient_pvalues",
    "percentile_bands",
]

MAX_FAILURE_RATE = 0.05
TARGETS = ("prediction", "conditional_quantile")


class BootstrapError(RuntimeError):
    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


@dataclass
class BootstrapEnsemble:
    betas: np.ndarray
    phis: np.ndarray
    q: int
    k: int | None
    fitter: str
    seed: int
    B: int
    replicate_ids: np.ndarray
    failures: list = field(default_factory=list)
    paths: np.ndarray | None = None
    quantile_paths: np.ndarray | None = None
    quantile_in_sample: np.ndarray | None = None
    cycled: int = 0
    nonconverged: int = 0

    @property
    def n_ok(self):
        return int(self.betas.shape[0])

    def bands(self, target="prediction", alpha=0.05):
        """Per-step ``(lower, upper)`` percentile bands for a path target."""
        if target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        P = self.paths if target == "prediction" else self.quantile_paths
        if P is None:
            raise ValueError("ensemble carries no paths")
        return percentile_bands(P, alpha)

    def summary(self):
        return {
            "B": self.B,
            "replications_kept": self.n_ok,
            "failures": len(self.failures),
            "cycled": self.cycled,
            "nonconverged": self.nonconverged,
            "seed": self.seed,
            "q": self.q,
            "k": self.k,
            "fitter": self.fitter,
        }


def percentile_bands(paths, alpha=0.05):
    paths = np.asarray(paths, dtype=float)
    lo, hi = np.percentile(paths, [50 * alpha, 100 - 50 * alpha], axis=0)
    return lo, hi


def _map(executor, fn, items):
    if executor is None:
        return [fn(i) for i in items]
    return list(executor.map(fn, items))


def _replicate_fit(model, dist, X, b, seed, burn_in, config, extra=0):
    rng = substream(seed, b)
    n = X.shape[0]
    delta = draw(dist, n + burn_in + extra, rng)
    e = simulate_stationary(model.phi, delta[: n + burn_in], burn_in)
    y_sim = X @ model.beta + e
    refit = fit_model(model.fitter, y_sim, X, model.q, getattr(model, "tau", None) or 0.5,
                      rows=model.rows, config=config)
    return refit, delta[n + burn_in:]


def _check_failures(failures, B):
    if len(failures) > MAX_FAILURE_RATE * B or len(failures) == B:
        raise BootstrapError(
            f"{len(failures)} of {B} bootstrap refits failed (limit {MAX_FAILURE_RATE:.0%})", failures
        )


def _prepare(model, dist, B):
    B = int(B)
    if B < 1:
        raise ValueError("B must be at least 1")
    model.phi.require_stationary()
    return B


def bootstrap_coefficients(model, dist, X, B=1000, seed=0, burn_in=DEFAULT_BURN_IN,
                           config=None, executor=None, k=None, drop_nonconverged=False):
    """Bootstrap the regression and AR coefficients of ``model``.

    ``X`` is the design the model was fitted on.
    """
    B = _prepare(model, dist, B)
    X = np.asarray(X, dtype=float)

    def one(b):
        try:
            refit, _ = _replicate_fit(model, dist, X, b, seed, burn_in, config)
        except Exception as exc:
            return b, None, f"replication {b}: {exc}"
        if drop_nonconverged and not refit.converged:
            return b, None, f"replication {b}: refit did not converge"
        return b, refit, None

    out = _map(executor, one, range(B))
    failures = [msg for _, r, msg in out if r is None]
    _check_failures(failures, B)
    kept = [(b, r) for b, r, _ in out if r is not None]
    for _, r in kept:
        assert r.q == model.q
    return BootstrapEnsemble(
        betas=np.array([r.beta for _, r in kept]),
        phis=np.array([r.phi.phi for _, r in kept]).reshape(len(kept), model.q),
        q=model.q, k=k, fitter=model.fitter, seed=int(seed), B=B,
        replicate_ids=np.array([b for b, _ in kept], dtype=np.int64), failures=failures,
        cycled=sum(r.cycled for _, r in kept),
        nonconverged=sum(not r.converged for _, r in kept),
    )


def bootstrap_paths(model, dist, X, X_future, y_obs, B=500, seed=0, burn_in=DEFAULT_BURN_IN,
                    config=None, executor=None, k=None, drop_nonconverged=False):
    """Bootstrap joint out-of-sample paths after the last calibration row.

    For replication ``b`` the refitted ``(beta~, phi~)`` propagate the
    residuals of the observed series forward with fresh innovation draws.
    Both the prediction paths ``x'beta~ + e~`` and the conditional-quantile
    paths ``x'beta~ + sum phi~ e~`` (prediction minus the fresh innovation)
    are stored, together with in-sample conditional-quantile curves
    computed from the observed responses.
    """
    B = _prepare(model, dist, B)
    X = np.asarray(X, dtype=float)
    Xf = np.asarray(X_future, dtype=float).reshape(-1, X.shape[1])
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    m = Xf.shape[0]
    q = model.q

    def one(b):
        try:
            refit, fresh = _replicate_fit(model, dist, X, b, seed, burn_in, config, extra=m)
        except Exception as exc:
            return b, None, f"replication {b}: {exc}"
        if drop_nonconverged and not refit.converged:
            return b, None, f"replication {b}: refit did not converge"
        coef = ARCoefficients(refit.phi.phi)
        if not coef.is_stationary:
            return b, None, f"replication {b}: refitted AR coefficients not stationary"
        phi = coef.phi
        resid = y_obs - X @ refit.beta
        buf = np.concatenate([resid[resid.size - q:], np.zeros(m)]) if q else np.zeros(m)
        cq = np.empty(m)
        for h in range(m):
            i = q + h
            ar = float(phi @ buf[i - q: i][::-1]) if q else 0.0
            buf[i] = ar + fresh[h]
            cq[h] = ar
        mean_f = Xf @ refit.beta
        pred = mean_f + buf[q:]
        cq = mean_f + cq
        # in-sample conditional quantile, residuals before the start taken as zero
        ins = X @ refit.beta
        for j in range(1, q + 1):
            ins[j:] += phi[j - 1] * resid[:-j]
        return b, (refit, pred, cq, ins), None

    out = _map(executor, one, range(B))
    failures = [msg for _, r, msg in out if r is None]
    _check_failures(failures, B)
    kept = [(b, r) for b, r, _ in out if r is not None]
    return BootstrapEnsemble(
        betas=np.array([r[0].beta for _, r in kept]),
        phis=np.array([r[0].phi.phi for _, r in kept]).reshape(len(kept), q),
        q=q, k=k, fitter=model.fitter, seed=int(seed), B=B,
        replicate_ids=np.array([b for b, _ in kept], dtype=np.int64), failures=failures,
        paths=np.array([r[1] for _, r in kept]).reshape(len(kept), m),
        quantile_paths=np.array([r[2] for _, r in kept]).reshape(len(kept), m),
        quantile_in_sample=np.array([r[3] for _, r in kept]),
        cycled=sum(r[0].cycled for _, r in kept),
        nonconverged=sum(not r[0].converged for _, r in kept),
    )


@dataclass
class CoefficientInference:
    names: list
    estimate: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    median: np.ndarray
    p_value: np.ndarray
    basis: str
    alpha: float

    def rows(self):
        for i, name in enumerate(self.names):
            yield {
                "name": name,
                "estimate": float(self.estimate[i]),
                "sd": float(self.sd[i]),
                "lower": float(self.lower[i]),
                "upper": float(self.upper[i]),
                "p_value": float(self.p_value[i]),
            }


def sign_pvalues(draws):
    """Two-sided sign p-values, floored at ``2 / B``."""
    draws = np.asarray(draws, dtype=float)
    B = draws.shape[0]
    frac_le = np.mean(draws <= 0, axis=0)
    frac_ge = np.mean(draws >= 0, axis=0)
    p = 2.0 * np.minimum(frac_le, frac_ge)
    return np.clip(p, 2.0 / B, 1.0)


def coefficient_pvalues(ensemble, estimate, pca=None, alpha=0.05, names=None):
    """Bootstrap SDs, percentile intervals and sign p-values.

    With ``pca`` the component-basis draws and ``estimate`` are mapped to the
    raw-proxy basis first (intercept adjusted for centering and scaling).
    """
    draws = ensemble.betas
    est = np.asarray(estimate, dtype=float)
    basis = "principal-component"
    if pca is not None:
        draws = pca.proxy_coefficients(draws)
        est = pca.proxy_coefficients(est)
        basis = "proxy"
    elif ensemble.k is None:
        basis = "predictor"
    lo, hi = percentile_bands(draws, alpha)
    if names is None:
        names = ["intercept"] + [f"x{j}" for j in range(1, draws.shape[1])]
    return CoefficientInference(
        names=list(names), estimate=est, sd=draws.std(axis=0, ddof=1) if draws.shape[0] > 1
        else np.zeros(draws.shape[1]), lower=lo, upper=hi, median=np.median(draws, axis=0),
        p_value=sign_pvalues(draws), basis=basis, alpha=alpha,
    )
