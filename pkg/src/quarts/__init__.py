"""Quantile regression with autoregressive residuals.

The main entry points are :func:`quarts_fit` (alternating fit of the
regression and AR coefficients), :func:`rarld` (lag selection),
:func:`blocked_cv_select_k` (principal-component count), the bootstrap
routines, and :func:`reconstruct` for the whole hindcast pipeline.
"""

__version__ = "0.1.0"

from .ar import ARCoefficients, NonStationaryError, propagate_mean, quasi_difference, simulate_stationary
from .engine import QuartsConfig, QuartsModel, find_nonconvexity_witness, quarts_fit, quarts_objective
from .gls import GlsModel, gls_fit
from .qr import QRFit, RankDeficientError, qr_fit, qr_fit_no_intercept
from .stats import QuantileLevel, check_loss, diagnose, ljung_box

__all__ = [
    "ARCoefficients",
    "NonStationaryError",
    "propagate_mean",
    "quasi_difference",
    "simulate_stationary",
    "QuartsConfig",
    "QuartsModel",
    "find_nonconvexity_witness",
    "quarts_fit",
    "quarts_objective",
    "GlsModel",
    "gls_fit",
    "QRFit",
    "RankDeficientError",
    "qr_fit",
    "qr_fit_no_intercept",
    "QuantileLevel",
    "check_loss",
    "diagnose",
    "ljung_box",
]
