"""Exact linear quantile regression.

The LP dual of the pinball-loss problem,

    max  y'a   s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1,

is solved by a Mehrotra predictor-corrector interior-point method. The
interior solution is then moved to an optimal vertex: a basis of ``p``
observations is read off the smallest residuals and improved by exact
edge pivots with a weighted-median line search until no descending edge
is left. The returned coefficients therefore interpolate ``p``
observations exactly.

Both stages are compiled with numba; the Python layer handles validation,
column scaling and the optional subgradient certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numba import njit
from scipy.optimize import lsq_linear

from .stats import QuantileLevel

__all__ = [
    "QRFit",
    "RankDeficientError",
    "qr_fit",
    "qr_fit_no_intercept",
    "optimality_certificate",
    "solve_qr",
]

OPTIMAL, MAX_ITERATIONS, DEGENERATE = 0, 1, 2
_STATUS = {OPTIMAL: "optimal", MAX_ITERATIONS: "max_iterations", DEGENERATE: "degenerate"}

MAX_IP_ITER = 200


class RankDeficientError(ValueError):
    """Design matrix does not have full column rank."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; dependent columns: {self.columns}")


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _max_step(v, dv):
    a = 1e300
    for i in range(v.shape[0]):
        if dv[i] < 0.0:
            t = -v[i] / dv[i]
            if t < a:
                a = t
    return a


@njit(cache=True, nogil=True)
def _interior_point(X, y, tau, max_iter, gap_tol):
    n, p = X.shape
    c = -y
    ones = np.ones(n)
    b = (1.0 - tau) * (X.T @ ones)
    x = np.full(n, 1.0 - tau)
    s = np.full(n, tau)
    dual = np.linalg.solve(X.T @ X, X.T @ c)
    r = c - X @ dual
    delta = 0.0
    for i in range(n):
        delta += abs(r[i])
    delta = max(0.1 * delta / n, 1e-8)
    z = np.maximum(r, 0.0) + delta
    w = np.maximum(-r, 0.0) + delta
    it = 0
    for it in range(1, max_iter + 1):
        rp = b - X.T @ x
        rd = c - X @ dual - z + w
        gap = x @ z + s @ w
        pobj = c @ x
        if gap < gap_tol * (1.0 + abs(pobj)):
            break
        mu = gap / (2.0 * n)
        d = 1.0 / (z / x + w / s)
        M = (X.T * d) @ X
        # affine scaling direction
        rxz = -x * z
        rsw = -s * w
        rho = rd - rxz / x + rsw / s
        dy = np.linalg.solve(M, rp + X.T @ (d * rho))
        dx = d * (X @ dy - rho)
        dz = (rxz - z * dx) / x
        dw = (rsw + w * dx) / s
        ap = min(1.0, min(_max_step(x, dx), _max_step(s, -dx)))
        ad = min(1.0, min(_max_step(z, dz), _max_step(w, dw)))
        mu_aff = ((x + ap * dx) @ (z + ad * dz) + (s - ap * dx) @ (w + ad * dw)) / (2.0 * n)
        sigma = (mu_aff / mu) ** 3
        # corrector
        rxz = sigma * mu - x * z - dx * dz
        rsw = sigma * mu - s * w + dx * dw
        rho = rd - rxz / x + rsw / s
        dy = np.linalg.solve(M, rp + X.T @ (d * rho))
        dx = d * (X @ dy - rho)
        dz = (rxz - z * dx) / x
        dw = (rsw + w * dx) / s
        ap = min(1.0, 0.99995 * min(_max_step(x, dx), _max_step(s, -dx)))
        ad = min(1.0, 0.99995 * min(_max_step(z, dz), _max_step(w, dw)))
        x = x + ap * dx
        s = s - ap * dx
        dual = dual + ad * dy
        z = z + ad * dz
        w = w + ad * dw
    return -dual, it


@njit(cache=True, nogil=True)
def _initial_basis(X, r):
    n, p = X.shape
    order = np.argsort(np.abs(r))
    basis = np.empty(p, dtype=np.int64)
    Q = np.zeros((p, p))
    m = 0
    for idx in order:
        v = X[idx].copy()
        norm0 = np.sqrt(v @ v)
        if norm0 == 0.0:
            continue
        for k in range(m):
            v = v - (Q[k] @ v) * Q[k]
        nv = np.sqrt(v @ v)
        if nv > 1e-8 * norm0:
            Q[m] = v / nv
            basis[m] = idx
            m += 1
            if m == p:
                break
    if m < p:
        return basis[:m]
    return basis


@njit(cache=True, nogil=True)
def _pivot(X, y, tau, basis, max_pivots, ztol):
    n, p = X.shape
    h = basis.copy()
    status = 0
    npiv = 0
    beta = np.linalg.solve(X[h], y[h])
    while True:
        r = y - X @ beta
        for m in range(p):
            r[h[m]] = 0.0
        Binv = np.linalg.inv(X[h])
        G = X @ Binv
        best = 0.0
        best_j = -1
        best_sign = 1.0
        for j in range(p):
            for sgn in (1.0, -1.0):
                slope = 0.0
                mag = 0.0
                for i in range(n):
                    a = sgn * G[i, j]
                    ri = r[i]
                    if ri > ztol:
                        slope -= tau * a
                    elif ri < -ztol:
                        slope += (1.0 - tau) * a
                    elif a > 0.0:
                        slope += (1.0 - tau) * a
                    else:
                        slope -= tau * a
                    mag += abs(a)
                rel = slope / mag
                if rel < -1e-12 and rel < best:
                    best = rel
                    best_j = j
                    best_sign = sgn
        if best_j < 0:
            for i in range(n):
                if abs(r[i]) <= ztol:
                    inb = False
                    for m in range(p):
                        if h[m] == i:
                            inb = True
                    if not inb:
                        status = 2
                        break
            break
        if npiv >= max_pivots:
            status = 1
            break
        a = best_sign * G[:, best_j]
        slope = 0.0
        for i in range(n):
            ri = r[i]
            if ri > ztol:
                slope -= tau * a[i]
            elif ri < -ztol:
                slope += (1.0 - tau) * a[i]
            elif a[i] > 0.0:
                slope += (1.0 - tau) * a[i]
            else:
                slope -= tau * a[i]
        tb = np.full(n, np.inf)
        for i in range(n):
            ri = r[i]
            if (ri > ztol and a[i] > 0.0) or (ri < -ztol and a[i] < 0.0):
                tb[i] = ri / a[i]
        order = np.argsort(tb)
        enter = -1
        for k in order:
            if not np.isfinite(tb[k]):
                break
            slope += abs(a[k])
            if slope >= 0.0:
                enter = k
                break
        if enter < 0:
            status = 1
            break
        h[best_j] = enter
        beta = np.linalg.solve(X[h], y[h])
        npiv += 1
    return beta, h, npiv, status


@njit(cache=True, nogil=True)
def _solve_scaled(X, y, tau, basis0, use_warm, max_ip, gap_tol, max_pivots, ztol):
    n, p = X.shape
    ip_iter = 0
    if use_warm:
        basis = basis0
    else:
        if n > 2 * p:
            beta0, ip_iter = _interior_point(X, y, tau, max_ip, gap_tol)
            r0 = y - X @ beta0
        else:
            r0 = y - X @ np.linalg.lstsq(X, y)[0]
        basis = _initial_basis(X, r0)
    if basis.shape[0] < p:
        return np.zeros(p), basis, ip_iter, 0, -1
    beta, h, npiv, status = _pivot(X, y, tau, basis, max_pivots, ztol)
    return beta, h, ip_iter, npiv, status


# ---------------------------------------------------------------------------
# Python layer


def _scales(X, y):
    sx = np.max(np.abs(X), axis=0)
    sx[sx == 0] = 1.0
    sy = float(np.max(np.abs(y))) if y.size else 1.0
    if sy == 0:
        sy = 1.0
    return sx, sy


def solve_qr(X, y, tau, basis=None, max_pivots=None):
    """Low-level solve without validation.

    Returns ``(beta, basis, iterations, status)``; ``basis`` can be passed
    back in to warm-start a related problem (same ``X``, perturbed ``y``).
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    sx, sy = _scales(X, y)
    Xs = X / sx
    ys = y / sy
    if max_pivots is None:
        max_pivots = 50 * n + 100
    use_warm = basis is not None and len(basis) == p
    b0 = np.asarray(basis if use_warm else np.zeros(p), dtype=np.int64)
    if use_warm and np.abs(np.linalg.det(Xs[b0])) < 1e-14:
        use_warm = False
    _, h, ip_iter, npiv, status = _solve_scaled(
        Xs, ys, float(tau), b0, use_warm, MAX_IP_ITER, 1e-11, int(max_pivots), 1e-12
    )
    if status < 0:
        raise RankDeficientError(_dependent_columns(X))
    beta = np.linalg.solve(X[h], y[h])
    return beta, h, ip_iter + npiv, status


def _dependent_columns(X, tol=1e-10):
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0:
        return list(range(X.shape[1]))
    rank = int(np.sum(d > tol * d[0]))
    return sorted(int(c) for c in piv[rank:])


@dataclass
class QRFit:
    """Result of a quantile regression fit.

    ``basis`` lists the observations interpolated by the vertex solution;
    their residuals are zero up to rounding.
    """

    beta: np.ndarray
    tau: float
    objective: float
    residuals: np.ndarray
    iterations: int
    status: str
    basis: np.ndarray

    @property
    def n_zero_residuals(self):
        scale = max(1.0, float(np.max(np.abs(self.residuals))) if self.residuals.size else 1.0)
        return int(np.sum(np.abs(self.residuals) <= 1e-9 * scale))


def _prepare(y, X, intercept):
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"design has shape {X.shape}, response has length {y.size}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in response or design")
    n, p = X.shape
    if intercept and not np.all(X[:, 0] == 1.0):
        raise ValueError("first design column must be the intercept (all ones)")
    if n < p:
        raise ValueError(f"need at least as many observations as coefficients (n={n}, p={p})")
    bad = _dependent_columns(X)
    if bad:
        raise RankDeficientError(bad)
    return y, X


def _fit(y, X, tau, intercept):
    tau = QuantileLevel(tau)
    y, X = _prepare(y, X, intercept)
    beta, h, iters, status = solve_qr(X, y, tau)
    resid = y - X @ beta
    if status == DEGENERATE and optimality_certificate(X, resid, tau):
        status = OPTIMAL
    obj = float(np.sum(np.where(resid >= 0, tau * resid, (tau - 1.0) * resid)))
    return QRFit(beta, float(tau), obj, resid, int(iters), _STATUS[status], np.sort(h))


def qr_fit(y, X, tau):
    """Quantile regression of ``y`` on a design whose first column is ones."""
    return _fit(y, X, tau, intercept=True)


def qr_fit_no_intercept(y, X_raw, tau):
    """Quantile regression through the origin."""
    return _fit(y, X_raw, tau, intercept=False)


def optimality_certificate(X, residuals, tau, tol=1e-6, zero_tol=None):
    """Check the subgradient optimality condition at a candidate solution.

    Observations with nonzero residual get weight ``tau`` or ``tau - 1``;
    the remaining weights must be chosen in ``[tau - 1, tau]`` so that
    ``sum_i v_i x_i = 0``. Feasibility is decided by a bounded
    least-squares solve.
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if zero_tol is None:
        zero_tol = 1e-9 * max(1.0, float(np.max(np.abs(r))) if r.size else 1.0)
    zero = np.abs(r) <= zero_tol
    v = np.where(r > 0, tau, tau - 1.0)
    target = -(X[~zero].T @ v[~zero])
    scale = max(1.0, float(np.sum(np.abs(X))) / max(X.shape[1], 1))
    if not np.any(zero):
        return bool(np.max(np.abs(target)) <= tol * scale)
    A = X[zero].T
    res = lsq_linear(A, target, bounds=(tau - 1.0, tau), method="bvls", tol=1e-13)
    return bool(np.max(np.abs(A @ res.x - target)) <= tol * scale)
