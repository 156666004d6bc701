"""Principal-components design reduction and blocked cross-validation.

Folds are ten contiguous blocks of model time after the first ``absorb``
points. Those leading points supply residual lags to the first holdout
block and are otherwise ordinary calibration data. Within a fold the
calibration rows fall into one or two contiguous segments; the first ``q``
rows of each segment only provide lags. Holdout points are scored with
innovations built from true residuals, so every holdout point has its lags.
"""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .fitting import check_fitter, fit_model, holdout_loss
from .stats import QuantileLevel

__all__ = [
    "PcaTransform",
    "fit_pca",
    "Fold",
    "make_folds",
    "CvReport",
    "CvFitError",
    "blocked_cv_select_k",
    "fold_innovations",
    "with_intercept",
    "default_k_max",
]

DEFAULT_FOLDS = 10
DEFAULT_ABSORB = 4
MIN_K = 3


class CvFitError(RuntimeError):
    """A fold fit failed; message names the fold and k."""


def with_intercept(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    return np.column_stack([np.ones(Z.shape[0]), Z])


@dataclass
class PcaTransform:
    """Correlation-scaled PCA of a predictor matrix.

    ``loadings`` holds all ``min(n - 1, p)`` components; truncation to ``k``
    happens in :meth:`transform` and :meth:`design`.
    """

    column_means: np.ndarray
    column_scales: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray

    @property
    def p(self):
        return self.loadings.shape[0]

    @property
    def k_max(self):
        return self.loadings.shape[1]

    def _k(self, k):
        k = self.k_max if k is None else int(k)
        if not 1 <= k <= self.k_max:
            raise ValueError(f"k={k} outside 1..{self.k_max}")
        return k

    def standardize(self, X_raw):
        X_raw = np.asarray(X_raw, dtype=float)
        if X_raw.ndim != 2 or X_raw.shape[1] != self.p:
            raise ValueError(f"expected {self.p} predictor columns")
        return (X_raw - self.column_means) / self.column_scales

    def transform(self, X_raw, k=None):
        """Component scores for the first ``k`` components."""
        return self.standardize(X_raw) @ self.loadings[:, : self._k(k)]

    def inverse_project(self, scores):
        """Map scores back to standardized predictor space."""
        scores = np.asarray(scores, dtype=float)
        return scores @ self.loadings[:, : scores.shape[1]].T

    def design(self, X_raw, k):
        return with_intercept(self.transform(X_raw, k))

    def proxy_coefficients(self, gamma):
        """Convert ``(intercept, component coefficients...)`` to raw-proxy coefficients.

        Works on a single vector or on rows of a matrix of replications.
        """
        gamma = np.asarray(gamma, dtype=float)
        single = gamma.ndim == 1
        G = np.atleast_2d(gamma)
        k = G.shape[1] - 1
        slopes = G[:, 1:] @ self.loadings[:, :k].T / self.column_scales
        intercept = G[:, 0] - slopes @ self.column_means
        out = np.column_stack([intercept, slopes])
        return out[0] if single else out

    def as_dict(self):
        return {
            "column_means": self.column_means.tolist(),
            "column_scales": self.column_scales.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


def fit_pca(X_raw, names=None):
    """Fit correlation PCA via the SVD of the standardized matrix."""
    X = np.asarray(X_raw, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n < 2 or p < 1:
        raise ValueError("PCA needs at least 2 rows and 1 column")
    if not np.all(np.isfinite(X)):
        raise ValueError("PCA input has missing or non-finite values")
    means = X.mean(axis=0)
    scales = X.std(axis=0, ddof=1)
    const = np.flatnonzero(scales <= 1e-12 * np.maximum(1.0, np.abs(means)))
    if const.size:
        labels = [names[j] for j in const] if names is not None else const.tolist()
        raise ValueError(f"constant predictor column(s): {labels}")
    Z = (X - means) / scales
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    k_max = min(n - 1, p)
    V = Vt[:k_max].T
    # deterministic sign: largest-magnitude loading positive
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(k_max)])
    flip[flip == 0] = 1.0
    V = V * flip
    eig = s[:k_max] ** 2 / (n - 1)
    return PcaTransform(column_means=means, column_scales=scales, loadings=V, eigenvalues=eig)


def default_k_max(n, p):
    return min(20, p, n // 10)


@dataclass
class Fold:
    index: int
    holdout: np.ndarray
    calibration: np.ndarray

    def targets(self, q):
        """Calibration rows with ``q`` in-segment predecessors."""
        c = self.calibration
        if c.size == 0:
            return c
        breaks = np.flatnonzero(np.diff(c) != 1) + 1
        parts = [seg[q:] for seg in np.split(c, breaks)]
        return np.concatenate(parts) if parts else c[:0]

    def scored(self, q):
        return self.holdout[self.holdout >= q]

    def lag_only(self, q):
        return int(self.calibration.size - self.targets(q).size)


def make_folds(n, n_folds=DEFAULT_FOLDS, absorb=DEFAULT_ABSORB, q=0):
    """Contiguous holdout blocks over model times ``absorb..n-1``.

    The first fold's calibration set excludes the absorbed leading points;
    later folds keep them.
    """
    n, n_folds, absorb = int(n), int(n_folds), int(absorb)
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if absorb < 0:
        raise ValueError("absorb must be non-negative")
    span = np.arange(absorb, n)
    if span.size < n_folds:
        raise ValueError("too few points for the requested folds")
    blocks = np.array_split(span, n_folds)
    smallest = min(b.size for b in blocks)
    if smallest <= q + absorb:
        raise ValueError(
            f"blocks of {smallest} points are too small for q={q} with absorb={absorb}"
        )
    everything = np.arange(n)
    folds = []
    for f, H in enumerate(blocks):
        mask = np.ones(n, dtype=bool)
        mask[H] = False
        if f == 0:
            mask[:absorb] = False
        folds.append(Fold(f, H, everything[mask]))
    return folds


def fold_innovations(y, X_raw, fold, q, k, tau, fitter, config=None, pca=None):
    """Fit on the fold's calibration rows and return the holdout innovations.

    ``k=None`` uses the raw predictors (plus intercept) without PCA.
    """
    if k is None:
        X = with_intercept(X_raw)
    else:
        pca = pca or fit_pca(X_raw[fold.calibration])
        X = pca.design(X_raw, k)
    model = fit_model(fitter, y, X, q, tau, rows=fold.targets(q), config=config)
    S = fold.scored(q)
    e = y - X @ model.beta
    d = e[S].copy()
    for j in range(1, q + 1):
        d -= model.phi.phi[j - 1] * e[S - j]
    return d, model


@dataclass
class CvReport:
    k_values: list
    mean_loss: list
    fold_losses: np.ndarray
    selected_k: int
    fold_bounds: list
    absorbed: list
    q: int
    tau: float
    fitter: str
    absorb: int = DEFAULT_ABSORB
    n_folds: int = DEFAULT_FOLDS
    nonconverged: int = field(default=0)

    def as_dict(self):
        return {
            "k_values": list(map(int, self.k_values)),
            "mean_loss": [float(v) for v in self.mean_loss],
            "selected_k": int(self.selected_k),
            "fold_bounds": self.fold_bounds,
            "absorbed": self.absorbed,
            "q": self.q,
            "tau": self.tau,
            "fitter": self.fitter,
            "absorb": self.absorb,
            "n_folds": self.n_folds,
            "nonconverged": self.nonconverged,
        }


def _map(executor, fn, items):
    if executor is None:
        return [fn(it) for it in items]
    return list(executor.map(fn, items))


def blocked_cv_select_k(y, X_raw, q, tau, fitter="quarts", k_min=MIN_K, k_max=None,
                        n_folds=DEFAULT_FOLDS, absorb=DEFAULT_ABSORB, config=None,
                        executor: Executor | None = None):
    """Choose the number of principal components by blocked CV.

    Each candidate ``k`` in ``k_min..k_max`` is scored by the mean over folds
    of the mean holdout loss (check loss, or squared error for ``gls``).
    Ties go to the smallest ``k``.
    """
    check_fitter(fitter)
    tau = float(QuantileLevel(tau))
    y = np.asarray(y, dtype=float).ravel()
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim == 1:
        X_raw = X_raw[:, None]
    n, p = X_raw.shape
    if y.size != n:
        raise ValueError("response and predictors differ in length")
    folds = make_folds(n, n_folds, absorb, q)
    k_cap = min(p, min(f.calibration.size for f in folds) - 1)
    k_max = default_k_max(n, p) if k_max is None else int(k_max)
    k_max = min(k_max, k_cap)
    if k_max < k_min:
        raise ValueError(f"k_max={k_max} is below the minimum of {k_min} components")
    ks = list(range(k_min, k_max + 1))

    def run(fold):
        pca = fit_pca(X_raw[fold.calibration])
        out, bad = [], 0
        for k in ks:
            try:
                d, model = fold_innovations(y, X_raw, fold, q, k, tau, fitter, config, pca)
            except Exception as exc:  # surface the failing cell
                raise CvFitError(f"fold {fold.index}, k={k}: {exc}") from exc
            bad += not model.converged
            out.append(float(np.mean(holdout_loss(fitter, d, tau))))
        return out, bad

    results = _map(executor, run, folds)
    losses = np.array([r[0] for r in results]).T  # (k, fold)
    mean_loss = losses.mean(axis=1)
    best = int(np.argmin(mean_loss))  # first minimum -> smallest k
    return CvReport(
        k_values=ks, mean_loss=mean_loss.tolist(), fold_losses=losses,
        selected_k=ks[best],
        fold_bounds=[[int(f.holdout[0]), int(f.holdout[-1])] for f in folds],
        absorbed=[(absorb if f.index == 0 else 0) + f.lag_only(q) for f in folds],
        q=int(q), tau=tau, fitter=fitter, absorb=int(absorb), n_folds=int(n_folds),
        nonconverged=int(sum(r[1] for r in results)),
    )
