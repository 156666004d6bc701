"""Residual autoregressive lag determination.

Starting from ``q = 0``, fit the model, test its innovations for remaining
serial correlation (Ljung-Box at the default lag) and raise ``q`` until the
test passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fitting import check_fitter, fit_model
from .pcqr import DEFAULT_ABSORB, DEFAULT_FOLDS, MIN_K, blocked_cv_select_k, fit_pca, with_intercept
from .stats import diagnose

__all__ = ["RarldResult", "RarldError", "rarld", "build_design"]


class RarldError(RuntimeError):
    """No lag up to ``max_q`` whitened the innovations."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class RarldResult:
    q: int
    model: object
    diagnostics: list
    k: int | None = None
    pca: object = None
    design: np.ndarray | None = None
    k_per_q: list = field(default_factory=list)
    cv_reports: list = field(default_factory=list)

    def as_dict(self):
        return {
            "q": self.q,
            "k": self.k,
            "k_per_q": self.k_per_q,
            "lb_pvalues": [d.lb_pvalue for d in self.diagnostics],
            "diagnostics": [d.as_dict() for d in self.diagnostics],
        }


def build_design(X_raw, k):
    """Full-sample design: PCA scores for ``k`` components, or raw predictors if ``k`` is None."""
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim == 1:
        X_raw = X_raw[:, None]
    if k is None:
        return with_intercept(X_raw), None
    pca = fit_pca(X_raw)
    return pca.design(X_raw, k), pca


def rarld(y, X_raw, tau=0.5, fitter="quarts", max_q=5, alpha=0.05, lb_lag=None,
          k=None, auto_k=False, k_min=MIN_K, k_max=None, n_folds=DEFAULT_FOLDS,
          absorb=DEFAULT_ABSORB, config=None, executor=None):
    """Select the residual AR order.

    Parameters
    ----------
    y : response in model time.
    X_raw : predictors without intercept.
    k : fixed number of principal components; ``None`` with ``auto_k=False``
        uses the raw predictors.
    auto_k : re-select ``k`` by blocked CV at every candidate ``q``.

    Raises
    ------
    RarldError
        If the innovations still show AR behaviour at ``q = max_q``.
    """
    check_fitter(fitter)
    y = np.asarray(y, dtype=float).ravel()
    diagnostics, k_per_q, reports = [], [], []
    design_cache = {}
    for q in range(0, int(max_q) + 1):
        if auto_k:
            rep = blocked_cv_select_k(y, X_raw, q, tau, fitter, k_min=k_min, k_max=k_max,
                                      n_folds=n_folds, absorb=absorb, config=config,
                                      executor=executor)
            reports.append(rep)
            k_q = rep.selected_k
        else:
            k_q = k
        if k_q not in design_cache:
            design_cache[k_q] = build_design(X_raw, k_q)
        X, pca = design_cache[k_q]
        model = fit_model(fitter, y, X, q, tau, config=config)
        diag = diagnose(model.innovations, lb_lag=lb_lag, alpha=alpha)
        diagnostics.append(diag)
        k_per_q.append(k_q)
        if not diag.ar_behavior_detected:
            return RarldResult(q=q, model=model, diagnostics=diagnostics, k=k_q, pca=pca,
                               design=X, k_per_q=k_per_q, cv_reports=reports)
    raise RarldError(
        f"innovations still autocorrelated at q={max_q} "
        f"(Ljung-Box p={diagnostics[-1].lb_pvalue:.3g}); the model may be misspecified",
        diagnostics,
    )
