"""Innovation distribution estimates and the blocked overfit-corrected scale."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .pcqr import DEFAULT_ABSORB, DEFAULT_FOLDS, _map, fold_innovations, make_folds
from .stats import AsymmetricLaplace, anderson_darling_normal, normal_ppf

__all__ = [
    "InnovationDistribution",
    "estimate_innovation_distribution",
    "overfit_corrected_sigma",
    "KINDS",
]

KINDS = ("gaussian", "empirical", "asymmetric_laplace")
MIN_INNOVATIONS = 8


@dataclass(frozen=True)
class InnovationDistribution:
    """Fitted innovation law used for point recursion and bootstrap draws.

    ``mu`` is the sample mean of the fitted innovations and drives the mean
    recursion. Draws use ``scale`` (the corrected SD when set). With
    ``center="quantile"`` and a known ``tau`` the Gaussian is placed so its
    ``tau``-quantile is zero; ``center="mean"`` keeps location ``mu``.
    """

    kind: str
    mu: float
    sigma_naive: float
    sigma_corrected: float | None = None
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tau: float | None = None
    center: str = "quantile"
    ad_test: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown innovation kind {self.kind!r}; expected one of {KINDS}")
        if self.center not in ("quantile", "mean"):
            raise ValueError("center must be 'quantile' or 'mean'")
        if self.sigma_naive < 0 or (self.sigma_corrected is not None and self.sigma_corrected < 0):
            raise ValueError("innovation scale must be non-negative")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())

    @property
    def scale(self):
        return self.sigma_naive if self.sigma_corrected is None else self.sigma_corrected

    @property
    def location(self):
        if self.center == "quantile" and self.tau is not None:
            return -self.scale * float(normal_ppf(self.tau))
        return self.mu

    @property
    def sigma_inflation(self):
        """Relative increase of the corrected over the naive SD (None if unset)."""
        if self.sigma_corrected is None or self.sigma_naive == 0:
            return None
        return self.sigma_corrected / self.sigma_naive - 1.0

    def with_sigma(self, sigma_corrected):
        return replace(self, sigma_corrected=float(sigma_corrected))

    def resample_values(self):
        """Stored innovations rescaled about ``mu`` to the current scale."""
        v = self.values
        if self.sigma_corrected is None or self.sigma_naive == 0:
            return v
        return self.mu + (v - self.mu) * (self.sigma_corrected / self.sigma_naive)

    def laplace(self):
        """Asymmetric Laplace with zero ``tau``-quantile and SD equal to ``scale``."""
        tau = 0.5 if self.tau is None else self.tau
        unit = AsymmetricLaplace(tau, 1.0)
        return AsymmetricLaplace(tau, self.scale / np.sqrt(unit.variance))

    def as_dict(self):
        out = {
            "kind": self.kind,
            "mu": self.mu,
            "sigma_naive": self.sigma_naive,
            "sigma_corrected": self.sigma_corrected,
            "sigma_inflation": self.sigma_inflation,
            "tau": self.tau,
            "center": self.center,
            "location": self.location,
            "count": int(self.values.size),
        }
        if self.ad_test is not None:
            out["anderson_darling"] = {"A2_star": self.ad_test[0], "p_value": self.ad_test[1]}
        return out


def estimate_innovation_distribution(model, kind="gaussian", center="quantile", sigma_corrected=None):
    """Summarize a fitted model's innovations.

    ``model`` is any fit exposing ``innovations`` and ``tau`` (``None`` for
    least squares, which always centers on the mean).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown innovation kind {kind!r}; expected one of {KINDS}")
    d = np.asarray(model.innovations, dtype=float)
    if d.size < MIN_INNOVATIONS:
        raise ValueError(f"need at least {MIN_INNOVATIONS} innovations, got {d.size}")
    mu = float(d.mean())
    sd = float(d.std(ddof=1))
    # constant input leaves rounding-level spread
    if sd <= 1e-12 * max(1.0, float(np.max(np.abs(d)))):
        sd = 0.0
    if sd == 0 and kind != "empirical":
        raise ValueError("innovations have zero variance; a parametric fit is undefined")
    ad = anderson_darling_normal(d) if sd > 0 else None
    tau = getattr(model, "tau", None)
    return InnovationDistribution(
        kind=kind, mu=mu, sigma_naive=sd, sigma_corrected=sigma_corrected,
        values=d.copy(), tau=tau, center=center if tau is not None else "mean",
        ad_test=None if ad is None else (float(ad[0]), float(ad[1])),
    )


def overfit_corrected_sigma(y, X_raw, q, k, tau, fitter="quarts", n_folds=DEFAULT_FOLDS,
                            absorb=DEFAULT_ABSORB, config=None, executor=None):
    """Average holdout-innovation SD over contiguous blocks with ``q`` and ``k`` fixed.

    Returns ``(sigma_corrected, per_block_sigmas)``. ``k=None`` means raw
    predictors without PCA.
    """
    y = np.asarray(y, dtype=float).ravel()
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim == 1:
        X_raw = X_raw[:, None]
    folds = make_folds(y.size, n_folds, absorb, q)

    def run(fold):
        d, _ = fold_innovations(y, X_raw, fold, q, k, tau, fitter, config)
        if d.size < 2:
            raise ValueError(f"fold {fold.index} has fewer than 2 scored points")
        return float(np.std(d, ddof=1))

    sig = _map(executor, run, folds)
    return float(np.mean(sig)), sig
