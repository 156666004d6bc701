"""Check function, serial-correlation diagnostics and normality testing.

Everything here works on plain 1-d arrays. The chi-square and normal
distribution functions are computed locally (regularized incomplete gamma
via series / continued fraction, normal CDF via ``math.erfc``) so that the
diagnostics do not depend on a statistics package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

__all__ = [
    "QuantileLevel",
    "check_loss",
    "acf",
    "pacf",
    "ljung_box",
    "ljung_box_from_acf",
    "default_lb_lag",
    "gammaincc",
    "gammainc",
    "chi2_sf",
    "normal_cdf",
    "normal_ppf",
    "AsymmetricLaplace",
    "anderson_darling_normal",
    "DiagnosticsReport",
    "diagnose",
    "normal_qq",
]

_STD_NORMAL = NormalDist()


class QuantileLevel(float):
    """A float restricted to the open interval (0, 1)."""

    def __new__(cls, tau):
        value = float(tau)
        if not (0.0 < value < 1.0) or not math.isfinite(value):
            raise ValueError(f"quantile level must lie in (0, 1), got {tau!r}")
        return super().__new__(cls, value)


def check_loss(x, tau):
    """Pinball loss ``tau*x`` for ``x >= 0`` and ``(tau-1)*x`` otherwise.

    Works elementwise on arrays; returns a float for scalar input.
    """
    tau = QuantileLevel(tau)
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("check_loss requires finite input")
    out = np.where(arr >= 0, tau * arr, (tau - 1.0) * arr)
    if out.ndim == 0:
        return float(out)
    return out


def _as_series(x, min_len=2):
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size < min_len:
        raise ValueError(f"series needs at least {min_len} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


def acf(x, max_lag):
    """Sample autocorrelations at lags ``0..max_lag`` (divisor-n convention)."""
    arr = _as_series(x)
    n = arr.size
    max_lag = int(max_lag)
    if max_lag < 0 or max_lag >= n:
        raise ValueError(f"max_lag must be in [0, {n - 1}], got {max_lag}")
    dev = arr - arr.mean()
    denom = float(dev @ dev)
    if denom <= 1e-300 * n or denom < np.finfo(float).tiny:
        raise ValueError("autocorrelation undefined for a constant series")
    r = np.empty(max_lag + 1)
    r[0] = 1.0
    for k in range(1, max_lag + 1):
        r[k] = float(dev[: n - k] @ dev[k:]) / denom
    return r


def _durbin_levinson(r, max_lag):
    pacf_vals = np.empty(max_lag)
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, max_lag + 1):
        if abs(v) < 1e-12:
            raise ValueError(f"Durbin-Levinson recursion broke down at lag {k}")
        a = (r[k] - float(phi @ r[k - 1:0:-1])) / v if k > 1 else r[1]
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        v *= 1.0 - a * a
        pacf_vals[k - 1] = a
    return pacf_vals


def pacf(x, max_lag):
    """Partial autocorrelations at lags ``1..max_lag`` via Durbin-Levinson."""
    r = acf(x, max_lag)
    return _durbin_levinson(r, int(max_lag))


def default_lb_lag(n):
    """Default Ljung-Box lag ``min(10, n // 5)`` (at least 1)."""
    return max(1, min(10, int(n) // 5))


def ljung_box_from_acf(r, n, lag):
    """Ljung-Box statistic and p-value from autocorrelations ``r[0..lag]``."""
    r = np.asarray(r, dtype=float)
    lag = int(lag)
    if lag < 1 or lag >= n or lag >= r.size:
        raise ValueError(f"invalid Ljung-Box lag {lag} for n={n}")
    k = np.arange(1, lag + 1)
    q = n * (n + 2.0) * float(np.sum(r[1: lag + 1] ** 2 / (n - k)))
    return q, chi2_sf(q, lag)


def ljung_box(x, lag=None):
    """Ljung-Box portmanteau test; returns ``(Q, p_value)``."""
    arr = _as_series(x)
    if lag is None:
        lag = default_lb_lag(arr.size)
    r = acf(arr, lag)
    return ljung_box_from_acf(r, arr.size, lag)


# -- incomplete gamma -------------------------------------------------------

_EPS = 1e-16
_MAX_ITER = 10000


def _gamma_series(a, x):
    # P(a, x) by the power series; converges fast for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # Q(a, x) by Lentz's continued fraction; for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc(a, x):
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0 or x < 0:
        raise ValueError("gammainc requires a > 0 and x >= 0")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammaincc(a, x):
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0 or x < 0:
        raise ValueError("gammaincc requires a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_sf(x, df):
    """Survival function of the chi-square distribution."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    return gammaincc(0.5 * df, 0.5 * x)


_erfc = np.frompyfunc(math.erfc, 1, 1)


def normal_cdf(z):
    """Standard normal CDF, elementwise."""
    arr = np.asarray(z, dtype=float)
    out = 0.5 * np.asarray(_erfc(-arr / math.sqrt(2.0)), dtype=float)
    return float(out) if out.ndim == 0 else out


def normal_ppf(p):
    """Standard normal quantile function, elementwise."""
    arr = np.asarray(p, dtype=float)
    out = np.array([_STD_NORMAL.inv_cdf(float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AsymmetricLaplace:
    """Density ``tau(1-tau)/b * exp(-check_loss(z)/b)``; its tau-quantile is 0."""

    tau: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "tau", QuantileLevel(self.tau))
        if not self.b > 0:
            raise ValueError("scale b must be positive")

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        rho = np.where(z >= 0, self.tau * z, (self.tau - 1.0) * z)
        return self.tau * (1.0 - self.tau) / self.b * np.exp(-rho / self.b)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        t, b = self.tau, self.b
        neg = t * np.exp((1.0 - t) * np.minimum(z, 0.0) / b)
        pos = 1.0 - (1.0 - t) * np.exp(-t * np.maximum(z, 0.0) / b)
        return np.where(z < 0, neg, pos)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        t, b = self.tau, self.b
        low = b / (1.0 - t) * np.log(np.maximum(u, 1e-300) / t)
        high = -b / t * np.log(np.maximum(1.0 - u, 1e-300) / (1.0 - t))
        return np.where(u < t, low, high)

    @property
    def mean(self):
        return self.b * (1.0 - 2.0 * self.tau) / (self.tau * (1.0 - self.tau))

    @property
    def variance(self):
        t = self.tau
        return self.b ** 2 * (1.0 - 2.0 * t + 2.0 * t * t) / (t * t * (1.0 - t) ** 2)

    def sample(self, rng, size):
        neg = rng.random(size) < self.tau
        e = rng.standard_exponential(size)
        return np.where(neg, -self.b / (1.0 - self.tau) * e, self.b / self.tau * e)


def anderson_darling_normal(sample):
    """Anderson-Darling normality test with estimated mean and variance.

    Returns the modified statistic ``A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)`` and
    its p-value from the D'Agostino-Stephens piecewise approximation.
    """
    x = np.sort(_as_series(sample, min_len=8))
    n = x.size
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValueError("Anderson-Darling test undefined for zero-variance sample")
    z = normal_cdf((x - x.mean()) / sd)
    z = np.clip(z, 1e-300, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - float(np.sum((2 * i - 1) * (np.log(z) + np.log1p(-z[::-1])))) / n
    a2s = a2 * (1.0 + 0.75 / n + 2.25 / n ** 2)
    if a2s >= 0.6:
        p = math.exp(1.2937 - 5.709 * a2s + 0.0186 * a2s ** 2)
    elif a2s >= 0.34:
        p = math.exp(0.9177 - 4.279 * a2s - 1.38 * a2s ** 2)
    elif a2s >= 0.2:
        p = 1.0 - math.exp(-8.318 + 42.796 * a2s - 59.938 * a2s ** 2)
    else:
        p = 1.0 - math.exp(-13.436 + 101.14 * a2s - 223.73 * a2s ** 2)
    return a2s, min(max(p, 0.0), 1.0)


def normal_qq(sample):
    """Normal Q-Q coordinates ``(theoretical, sample)``, both sorted."""
    x = np.sort(_as_series(sample, min_len=1))
    n = x.size
    theo = normal_ppf((np.arange(1, n + 1) - 0.5) / n)
    return theo, x


@dataclass
class DiagnosticsReport:
    """ACF / PACF / Ljung-Box summary of one innovation series.

    ``ljung_box`` holds ``(lag, Q, p_value)`` rows for lags ``1..max_lag``;
    the AR decision uses only the row at ``lb_lag``.
    """

    acf: np.ndarray
    pacf: np.ndarray
    ljung_box: list
    lb_lag: int
    lb_pvalue: float
    alpha: float
    band: float
    acf_exceedances: int
    pacf_exceedances: int
    ar_behavior_detected: bool
    n: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "n": self.n,
            "acf": [float(v) for v in self.acf],
            "pacf": [float(v) for v in self.pacf],
            "ljung_box": [[int(k), float(q), float(p)] for k, q, p in self.ljung_box],
            "lb_lag": self.lb_lag,
            "lb_pvalue": self.lb_pvalue,
            "alpha": self.alpha,
            "band": self.band,
            "acf_exceedances": self.acf_exceedances,
            "pacf_exceedances": self.pacf_exceedances,
            "ar_behavior_detected": self.ar_behavior_detected,
        }


def diagnose(x, max_lag=None, lb_lag=None, alpha=0.05):
    """Serial-correlation diagnostics for an innovation series.

    AR behaviour is flagged when the Ljung-Box p-value at ``lb_lag``
    (default ``min(10, n // 5)``) is below ``alpha``. ACF/PACF values
    outside the ``1.96/sqrt(n)`` band are counted for inspection only.
    """
    arr = _as_series(x, min_len=3)
    n = arr.size
    if lb_lag is None:
        lb_lag = default_lb_lag(n)
    if max_lag is None:
        max_lag = max(lb_lag, min(20, n - 1))
    max_lag = min(int(max_lag), n - 1)
    lb_lag = min(int(lb_lag), max_lag)
    r = acf(arr, max_lag)
    pr = _durbin_levinson(r, max_lag)
    rows = []
    for k in range(1, max_lag + 1):
        q, p = ljung_box_from_acf(r, n, k)
        rows.append((k, q, p))
    p_at = rows[lb_lag - 1][2]
    band = 1.96 / math.sqrt(n)
    return DiagnosticsReport(
        acf=r,
        pacf=pr,
        ljung_box=rows,
        lb_lag=lb_lag,
        lb_pvalue=p_at,
        alpha=alpha,
        band=band,
        acf_exceedances=int(np.sum(np.abs(r[1:]) > band)),
        pacf_exceedances=int(np.sum(np.abs(pr) > band)),
        ar_behavior_detected=bool(p_at < alpha),
        n=n,
    )
