"""Dispatch between the quantile (``quarts``) and least-squares (``gls``) fitters."""

from __future__ import annotations

import numpy as np

from .engine import quarts_fit
from .gls import gls_fit

FITTERS = ("quarts", "gls")


def check_fitter(fitter):
    if fitter not in FITTERS:
        raise ValueError(f"unknown fitter {fitter!r}; expected one of {FITTERS}")
    return fitter


def fit_model(fitter, y, X, q, tau, rows=None, config=None):
    check_fitter(fitter)
    if fitter == "quarts":
        return quarts_fit(y, X, q, tau, config=config, rows=rows)
    return gls_fit(y, X, q, config=config, rows=rows)


def holdout_loss(fitter, d, tau):
    """Per-point validation loss: check loss for quantile fits, squared error for GLS."""
    d = np.asarray(d, dtype=float)
    if fitter == "gls":
        return d * d
    return np.where(d >= 0, tau * d, (tau - 1.0) * d)
