"""Least-squares regression with AR(q) residuals (iterated feasible GLS).

The baseline alternates an OLS fit of the quasi-differenced response on the
quasi-differenced design with an intercept-free OLS fit of the residuals on
their lags. Unlike the quantile fitter, the regression step uses the
transformed design, so each half-step is an exact Cochrane-Orcutt update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ar import ARCoefficients, lag_matrix
from .engine import QuartsConfig, _ARRegressionFit, _check_rows, _cycle_period, _validate, default_rows
from .qr import RankDeficientError, _dependent_columns

__all__ = ["GlsModel", "gls_fit", "ols"]


@dataclass
class GlsModel(_ARRegressionFit):
    tau: float | None = None

    fitter = "gls"

    @property
    def objective(self):
        return float(self.objective_trace[-1]) if self.objective_trace else float("nan")


def ols(y, X):
    """Least-squares coefficients via an orthogonal factorization."""
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def _difference_rows(s, phi, rows):
    q = phi.size
    out = s[rows].copy()
    for k in range(1, q + 1):
        out -= phi[k - 1] * s[rows - k]
    return out


def gls_fit(y, X, q, config=None, rows=None, tau=None):
    """Fit the GLS baseline with AR(q) residuals.

    ``tau`` is accepted for interface symmetry with :func:`quarts_fit` and
    ignored. ``rows`` has the same meaning as there.
    """
    cfg = config or QuartsConfig()
    y, X, q = _validate(y, X, q)
    n, p1 = X.shape
    if not np.all(X[:, 0] == 1.0):
        raise ValueError("first design column must be the intercept (all ones)")
    rows = default_rows(n, q) if rows is None else _check_rows(rows, n, q)
    if rows.size < p1 + q + 1 and not (q == 0 and rows.size >= p1):
        raise ValueError(f"need more target rows than parameters (rows={rows.size}, p+1={p1}, q={q})")
    bad = _dependent_columns(X[rows])
    if bad:
        raise RankDeficientError(bad)

    if q == 0:
        beta = ols(y[rows], X[rows])
        e = y - X @ beta
        d = e[rows].copy()
        return GlsModel(beta=beta, phi=ARCoefficients(np.zeros(0)), q=0, residuals=e,
                        innovations=d, rows=rows, objective_trace=[float(d @ d)],
                        converged=True, iterations=1)

    phi = np.zeros(q)
    history = []
    converged = False
    cycled = False
    chosen = None
    for j in range(1, cfg.max_iter + 1):
        beta = ols(_difference_rows(y, phi, rows), _difference_rows(X, phi, rows))
        e = y - X @ beta
        L = lag_matrix(e, q, rows)
        scale = max(1.0, float(np.max(np.abs(y))))
        if np.max(np.abs(L)) <= 1e-12 * scale:
            phi = np.zeros(q)
        else:
            phi = ols(e[rows], L)
        d = e[rows] - L @ phi
        history.append((beta, phi, float(d @ d)))
        theta = np.concatenate([beta, phi])
        if j >= 2:
            prev = np.concatenate(history[-2][:2])
            if np.max(np.abs(theta - prev)) < cfg.tol:
                converged = True
                chosen = j - 1
                break
        period = _cycle_period(history, cfg)
        if period:
            # oscillation: keep the best iterate of the cycle (earliest on ties)
            objs = [h[2] for h in history[-period - 1:-1]]
            chosen = j - 1 - period + int(np.argmin(objs))
            cycled = True
            break
    if chosen is None:
        chosen = int(np.argmin([h[2] for h in history]))
    beta, phi, _ = history[chosen]
    e = y - X @ beta
    d = e[rows] - lag_matrix(e, q, rows) @ phi
    return GlsModel(beta=beta, phi=ARCoefficients(phi), q=q, residuals=e, innovations=d,
                    rows=rows, objective_trace=[h[2] for h in history[: chosen + 1]],
                    converged=converged, cycled=cycled, iterations=len(history))
