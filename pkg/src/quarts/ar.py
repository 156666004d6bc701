"""AR(q) residual machinery: backshift polynomials, simulation, forecasting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "ARCoefficients",
    "NonStationaryError",
    "quasi_difference",
    "undifference",
    "simulate_stationary",
    "propagate_mean",
    "lag_matrix",
]

STATIONARITY_TOL = 1e-8
DEFAULT_BURN_IN = 500


class NonStationaryError(ValueError):
    """AR polynomial has a root on or inside the unit circle."""


@dataclass(frozen=True)
class ARCoefficients:
    """Coefficients of ``phi(z) = 1 - phi_1 z - ... - phi_q z^q``.

    A non-stationary vector can be constructed (fits may produce one) but
    simulation and prediction refuse it.
    """

    phi: np.ndarray
    tau: float | None = None

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float)).ravel()
        if not np.all(np.isfinite(phi)):
            raise ValueError("AR coefficients must be finite")
        object.__setattr__(self, "phi", phi)

    @property
    def q(self):
        return int(self.phi.size)

    def companion(self):
        q = self.q
        C = np.zeros((q, q))
        C[0, :] = self.phi
        if q > 1:
            C[1:, :-1] = np.eye(q - 1)
        return C

    @property
    def max_modulus(self):
        if self.q == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    @property
    def is_stationary(self):
        return self.max_modulus < 1.0 - STATIONARITY_TOL

    def require_stationary(self):
        if not self.is_stationary:
            raise NonStationaryError(
                f"AR coefficients {self.phi.tolist()} are not stationary "
                f"(max companion modulus {self.max_modulus:.6g})"
            )


def _phi(phi):
    if isinstance(phi, ARCoefficients):
        return phi.phi
    return np.atleast_1d(np.asarray(phi, dtype=float)).ravel()


def quasi_difference(s, phi):
    """Apply ``phi(B)``: ``s_i - sum_k phi_k s_{i-k}`` for ``i = q+1..n``.

    Matrices are differenced columnwise; output has ``n - q`` rows.
    """
    phi = _phi(phi)
    q = phi.size
    arr = np.asarray(s, dtype=float)
    n = arr.shape[0]
    if n <= q:
        raise ValueError(f"series of length {n} too short for AR order {q}")
    out = arr[q:].copy()
    for k in range(1, q + 1):
        out -= phi[k - 1] * arr[q - k: n - k]
    return out


def undifference(d, initial, phi):
    """Invert :func:`quasi_difference` given the first ``q`` values."""
    phi = _phi(phi)
    q = phi.size
    init = np.asarray(initial, dtype=float)
    if init.shape[0] != q:
        raise ValueError("need exactly q initial values")
    d = np.asarray(d, dtype=float)
    out = np.concatenate([init, np.zeros_like(d)])
    for i in range(d.shape[0]):
        acc = d[i].copy() if np.ndim(d[i]) else float(d[i])
        for k in range(1, q + 1):
            acc = acc + phi[k - 1] * out[q + i - k]
        out[q + i] = acc
    return out


def lag_matrix(e, q, rows):
    """Columns ``e[rows-1], ..., e[rows-q]`` for target indices ``rows``."""
    rows = np.asarray(rows)
    if q == 0:
        return np.zeros((rows.size, 0))
    return np.column_stack([e[rows - k] for k in range(1, q + 1)])


def simulate_stationary(phi, innovations, burn_in=DEFAULT_BURN_IN):
    """Run ``e_i = sum_k phi_k e_{i-k} + d_i`` from zero start, drop burn-in."""
    coef = phi if isinstance(phi, ARCoefficients) else ARCoefficients(phi)
    coef.require_stationary()
    d = np.asarray(innovations, dtype=float).ravel()
    burn_in = int(burn_in)
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    if burn_in > d.size:
        raise ValueError("burn_in exceeds number of innovations")
    if coef.q == 0:
        e = d.copy()
    else:
        e = lfilter([1.0], np.concatenate([[1.0], -coef.phi]), d)
    return e[burn_in:]


def propagate_mean(phi, last_residuals, horizon, mu_delta=0.0, check=True):
    """Out-of-sample residual recursion ``e_i = sum_k phi_k e_{i-k} + mu``.

    ``last_residuals`` are the final ``q`` in-sample residuals in time order
    (most recent last).
    """
    coef = phi if isinstance(phi, ARCoefficients) else ARCoefficients(phi)
    if check:
        coef.require_stationary()
    q = coef.q
    last = np.asarray(last_residuals, dtype=float).ravel()
    if last.size != q:
        raise ValueError(f"need {q} trailing residuals, got {last.size}")
    horizon = int(horizon)
    buf = np.concatenate([last, np.zeros(horizon)])
    for h in range(horizon):
        i = q + h
        acc = mu_delta
        for k in range(1, q + 1):
            acc += coef.phi[k - 1] * buf[i - k]
        buf[i] = acc
    return buf[q:]
