"""Quantile regression with AR(q) residuals, fitted by alternation.

Each iteration removes the current AR component from the response, refits
the quantile regression on the rows that have a full set of lags, and then
refits the AR coefficients by intercept-free quantile regression of the
residuals on their own lags (same ``tau``). The joint objective is not
convex for ``q >= 1``; :func:`find_nonconvexity_witness` exhibits a
certified midpoint violation for a given instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ar import ARCoefficients, lag_matrix
from .qr import RankDeficientError, _dependent_columns, qr_fit, solve_qr
from .rng import make_rng
from .stats import QuantileLevel

__all__ = [
    "QuartsConfig",
    "QuartsModel",
    "NonconvexityWitness",
    "default_rows",
    "quarts_objective",
    "quarts_fit",
    "regularity_column",
    "find_nonconvexity_witness",
]


@dataclass
class QuartsConfig:
    max_iter: int = 100
    tol: float = 1e-6
    cycle_tol: float = 1e-8
    max_period: int = 8


def _cycle_period(history, cfg):
    """Smallest period ``2..max_period`` with which the parameter sequence repeats."""
    theta = np.concatenate(history[-1][:2])
    for period in range(2, cfg.max_period + 1):
        if len(history) <= period:
            break
        old = np.concatenate(history[-1 - period][:2])
        if np.max(np.abs(theta - old)) < cfg.cycle_tol:
            return period
    return 0


def default_rows(n, q):
    return np.arange(q, n)


def _check_rows(rows, n, q):
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < q or rows.max() >= n):
        raise ValueError("target rows must have q in-sample lags")
    return rows


@dataclass
class _ARRegressionFit:
    """Shared layout of the QUARTS and GLS models."""

    beta: np.ndarray
    phi: ARCoefficients
    q: int
    residuals: np.ndarray
    innovations: np.ndarray
    rows: np.ndarray
    objective_trace: list
    converged: bool
    iterations: int
    cycled: bool = False

    fitter = "base"

    @property
    def usable(self):
        """Converged, or stopped on a detected 2-cycle at its better iterate."""
        return self.converged or self.cycled

    def fitted_quantile(self, y):
        """Conditional location ``x'beta + sum_k phi_k e_{i-k}`` in-sample.

        Residuals before the first observation are taken as zero, so the
        first ``q`` values are edge-tainted.
        """
        y = np.asarray(y, dtype=float)
        e = self.residuals
        out = y - e
        padded = np.concatenate([np.zeros(self.q), e])
        for k in range(1, self.q + 1):
            out = out + self.phi.phi[k - 1] * padded[self.q - k: self.q - k + e.size]
        return out


@dataclass
class QuartsModel(_ARRegressionFit):
    tau: float = 0.5

    fitter = "quarts"

    @property
    def objective(self):
        return float(self.objective_trace[-1]) if self.objective_trace else float("nan")


@dataclass
class NonconvexityWitness:
    n: int
    p: int
    q: int
    tau: float
    point_a: np.ndarray
    point_b: np.ndarray
    midpoint: np.ndarray
    f_a: float
    f_b: float
    f_mid: float
    margin: float
    attempts: int
    regularity_column: int = field(default=-1)

    def split(self, point):
        """Split a stacked ``(phi, beta)`` vector."""
        return point[: self.q], point[self.q:]


def _validate(y, X, q):
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"design has shape {X.shape}, response has length {y.size}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in response or design")
    q = int(q)
    if q < 0:
        raise ValueError("AR order q must be non-negative")
    return y, X, q


def _check_loss_sum(d, tau):
    return float(np.sum(np.where(d >= 0, tau * d, (tau - 1.0) * d)))


def quarts_objective(y, X, beta, phi, tau, rows=None):
    """Sum of check losses of ``phi(B) y_i - phi(B) x_i' beta`` over target rows."""
    tau = QuantileLevel(tau)
    y, X, _ = _validate(y, X, 0)
    beta = np.asarray(beta, dtype=float).ravel()
    phi = phi.phi if isinstance(phi, ARCoefficients) else np.atleast_1d(np.asarray(phi, dtype=float))
    q = phi.size
    if beta.size != X.shape[1]:
        raise ValueError("beta length does not match design columns")
    if y.size <= q:
        raise ValueError("series too short for AR order")
    rows = default_rows(y.size, q) if rows is None else _check_rows(rows, y.size, q)
    e = y - X @ beta
    d = e[rows] - lag_matrix(e, q, rows) @ phi if q else e[rows]
    return _check_loss_sum(d, tau)


def _negligible(v, ref):
    return float(np.max(np.abs(v))) <= 1e-12 * max(1.0, float(np.max(np.abs(ref))))


def quarts_fit(y, X, q, tau, config=None, rows=None):
    """Fit the quantile regression with AR(q) residuals.

    Parameters
    ----------
    y : (n,) response.
    X : (n, p+1) design with leading intercept column.
    q : AR order of the residuals.
    tau : quantile level.
    config : :class:`QuartsConfig`, optional.
    rows : target indices for the regression stages; defaults to
        ``q..n-1``. Passing a subset lets blocked cross-validation fit data
        with gaps, as long as every target row has its ``q`` lags present.

    Returns
    -------
    QuartsModel
    """
    cfg = config or QuartsConfig()
    tau = QuantileLevel(tau)
    y, X, q = _validate(y, X, q)
    n, p1 = X.shape
    if not np.all(X[:, 0] == 1.0):
        raise ValueError("first design column must be the intercept (all ones)")
    rows = default_rows(n, q) if rows is None else _check_rows(rows, n, q)
    if rows.size < p1 + q + 1 and not (rows.size == n and q == 0 and n >= p1):
        raise ValueError(f"need more target rows than parameters (rows={rows.size}, p+1={p1}, q={q})")

    if q == 0:
        fit = qr_fit(y[rows], X[rows], tau)
        e = y - X @ fit.beta
        return QuartsModel(
            beta=fit.beta, phi=ARCoefficients(np.zeros(0), tau), q=0, residuals=e,
            innovations=e[rows].copy(), rows=rows, objective_trace=[fit.objective],
            converged=True, iterations=1, tau=float(tau),
        )

    bad = _dependent_columns(X[rows])
    if bad:
        raise RankDeficientError(bad)
    Xr = np.ascontiguousarray(X[rows])
    phi = np.zeros(q)
    e = np.zeros(n)
    history = []
    converged = False
    cycled = False
    chosen = None
    hb = hp = None
    for j in range(1, cfg.max_iter + 1):
        ycheck = y[rows] - lag_matrix(e, q, rows) @ phi
        # later iterates move little, so the previous vertex is a good start
        beta, hb, _, _ = solve_qr(Xr, ycheck, tau, basis=hb)
        e = y - X @ beta
        L = lag_matrix(e, q, rows)
        if _negligible(L, y) or _negligible(e[rows], y):
            phi = np.zeros(q)
        else:
            phi, hp, _, _ = solve_qr(L, e[rows], tau, basis=hp)
        d = e[rows] - L @ phi
        history.append((beta, phi, _check_loss_sum(d, tau)))
        theta = np.concatenate([beta, phi])
        if _negligible(d, y) and not np.any(phi):
            # exact fit with no AR structure left to estimate
            converged = True
            chosen = j - 1
            break
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
        objs = [h[2] for h in history]
        chosen = int(np.argmin(objs))
    beta, phi, _ = history[chosen]
    e = y - X @ beta
    d = e[rows] - lag_matrix(e, q, rows) @ phi
    return QuartsModel(
        beta=beta, phi=ARCoefficients(phi, tau), q=q, residuals=e, innovations=d,
        rows=rows, objective_trace=[h[2] for h in history[: chosen + 1]],
        converged=converged, cycled=cycled, iterations=len(history), tau=float(tau),
    )


# ---------------------------------------------------------------------------
# nonconvexity


def _subset_sums(v):
    sums = np.zeros(1)
    for x in v:
        sums = np.concatenate([sums, sums + x])
    return sums


def _pattern_can_vanish(col, tau, scale):
    # sum_i a_i x_i with a_i in {1-tau, tau} equals
    # (1-tau) * sum(x) + (2 tau - 1) * (sum over the tau-weighted subset)
    tol = 1e-12 * scale
    base = (1.0 - tau) * float(np.sum(col))
    w = 2.0 * tau - 1.0
    if abs(w) < 1e-15:
        return abs(base) <= tol
    m = col.size
    if m <= 20:
        return bool(np.min(np.abs(base + w * _subset_sums(col))) <= tol)
    if m <= 40:
        left = np.sort(_subset_sums(col[: m // 2]))
        right = _subset_sums(col[m // 2:])
        # need base + w*(l + r) == 0  <=>  l == -(base/w) - r
        target = -base / w - right
        idx = np.clip(np.searchsorted(left, target), 1, left.size - 1)
        gap = np.minimum(np.abs(left[idx] - target), np.abs(left[idx - 1] - target))
        return bool(np.min(np.abs(w) * gap) <= tol)
    rng = make_rng(0)
    pats = rng.random((20000, m)) < 0.5
    vals = base + w * (pats @ col)
    return bool(np.min(np.abs(vals)) <= tol)


def regularity_column(X, q, tau):
    """First non-intercept column satisfying the nonconvexity regularity condition.

    Returns ``None`` when no column qualifies. Exact for up to 40 target rows;
    beyond that the check samples sign patterns.
    """
    X = np.asarray(X, dtype=float)
    sub = X[q:]
    scale = max(1.0, float(np.max(np.abs(sub))) * sub.shape[0])
    for j in range(1, X.shape[1]):
        if not _pattern_can_vanish(sub[:, j], float(tau), scale):
            return j
    return None


def find_nonconvexity_witness(y, X, q, tau, seed=0, max_attempts=100_000, min_margin=1e-6):
    """Random search for a midpoint-convexity violation of the joint objective.

    Raises ``ValueError`` for ``q == 0`` (the objective is then convex) or
    when the regularity condition fails, and ``RuntimeError`` if the budget
    is exhausted.
    """
    tau = QuantileLevel(tau)
    y, X, q = _validate(y, X, q)
    if q < 1:
        raise ValueError("objective is convex for q = 0; a witness needs q >= 1")
    j = regularity_column(X, q, tau)
    if j is None:
        raise ValueError("regularity condition fails: every predictor column admits a vanishing sign pattern")
    rng = make_rng(seed)
    p1 = X.shape[1]
    yscale = float(np.std(y)) or 1.0
    xscale = float(np.std(X[:, 1:])) if p1 > 1 else 1.0
    beta_scale = yscale / max(xscale, 1e-12)

    def f(theta):
        return quarts_objective(y, X, theta[q:], theta[:q], tau)

    for attempt in range(1, max_attempts + 1):
        center = np.concatenate([rng.uniform(-1, 1, q), beta_scale * rng.standard_normal(p1)])
        radius = np.exp(rng.uniform(-4, 1))
        u = rng.standard_normal(q + p1)
        u[q:] *= beta_scale
        u *= radius
        a, b = center + u, center - u
        fa, fb, fm = f(a), f(b), f(center)
        margin = fm - 0.5 * (fa + fb)
        if margin > min_margin:
            return NonconvexityWitness(
                n=y.size, p=p1 - 1, q=q, tau=float(tau), point_a=a, point_b=b,
                midpoint=center, f_a=fa, f_b=fb, f_mid=fm, margin=margin,
                attempts=attempt, regularity_column=j,
            )
    raise RuntimeError(f"no convexity violation found in {max_attempts} attempts")

