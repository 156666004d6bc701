"""End-to-end hindcast: lag and component selection, fit, innovation model,
bootstrap bands, multi-quantile families and smoothing.

The panel is put in model time first (calibration rows ending next to the
reconstruction; backwards in calendar time for a hindcast). Results are
returned in the panel's own row order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bootstrap import bootstrap_coefficients, bootstrap_paths, coefficient_pvalues, percentile_bands
from .engine import QuartsConfig
from .fitting import check_fitter, fit_model
from .innovation import estimate_innovation_distribution, overfit_corrected_sigma
from .pcqr import DEFAULT_ABSORB, DEFAULT_FOLDS, MIN_K, blocked_cv_select_k
from .rarld import build_design, rarld
from .smoothing import default_smooth_df, smooth
from .stats import QuantileLevel, normal_ppf

__all__ = [
    "ReconstructConfig",
    "ReconstructionResult",
    "QuantileFamily",
    "FittedPipeline",
    "fit_pipeline",
    "reconstruct",
    "fit_quantile_family",
    "smooth",
    "DEFAULT_TAUS",
]

DEFAULT_TAUS = (0.1, 0.25, 0.5, 0.75, 0.9)
BANDS = ("prediction", "quantile")


@dataclass
class ReconstructConfig:
    tau: float = 0.5
    fitter: str = "quarts"
    q: int | None = None
    k: int | None = None
    auto_k: bool = True
    use_pca: bool = True
    max_q: int = 5
    lb_alpha: float = 0.05
    k_min: int = MIN_K
    k_max: int | None = None
    n_folds: int = DEFAULT_FOLDS
    absorb: int = DEFAULT_ABSORB
    innovation: str = "gaussian"
    center: str = "quantile"
    correct_sigma: bool = True
    bootstrap: int = 500
    coef_bootstrap: int = 0
    alpha: float = 0.05
    band: str = "prediction"
    smooth_df: float | None = None
    burn_in: int = 500
    seed: int = 0
    threads: int = 1
    drop_nonconverged: bool = False
    max_iter: int = 100

    def validate(self):
        t = float(self.tau)
        if not 0.001 <= t <= 0.999:
            raise ValueError(f"tau must lie in [0.001, 0.999], got {self.tau}")
        check_fitter(self.fitter)
        if self.band not in BANDS:
            raise ValueError(f"band must be one of {BANDS}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.q is not None and self.q < 0:
            raise ValueError("q must be non-negative")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")
        if self.bootstrap < 0 or self.coef_bootstrap < 0:
            raise ValueError("bootstrap counts must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        return self

    def as_dict(self):
        return asdict(self)


@dataclass
class ReconstructionResult:
    time: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    in_sample: np.ndarray
    smoothed_point: np.ndarray
    smoothed_lower: np.ndarray
    smoothed_upper: np.ndarray
    metadata: dict = field(default_factory=dict)
    instrumental: np.ndarray | None = None
    pipeline: object = None

    def __len__(self):
        return self.time.size

    def width(self, in_sample=None):
        w = self.upper - self.lower
        if in_sample is None:
            return w
        return w[self.in_sample == bool(in_sample)]


@dataclass
class FittedPipeline:
    """Everything fitted in model time, before bands are attached."""

    y: np.ndarray
    X: np.ndarray
    X_future: np.ndarray
    model: object
    q: int
    k: int | None
    pca: object
    dist: object
    sigma_blocks: list
    rarld: object = None
    cv: object = None
    warnings: list = field(default_factory=list)


@contextmanager
def _executor(threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            yield ex
    else:
        yield None


def _model_arrays(panel):
    order = panel.model_order()
    cal = panel.calibration[order]
    n = int(cal.sum())
    if not np.all(cal[:n]):
        raise ValueError("calibration rows are not at the start of model time")
    Xr = panel.proxies[order]
    y = panel.instrumental[order][:n]
    return order, y, Xr[:n], Xr[n:]


def fit_pipeline(y, X_cal, X_future, config, executor=None):
    """Select ``q`` and ``k``, fit, and estimate the innovation law (model time)."""
    cfg = config
    tau = float(QuantileLevel(cfg.tau))
    qcfg = QuartsConfig(max_iter=cfg.max_iter)
    warnings = []
    use_pca = cfg.use_pca
    k = cfg.k if use_pca else None
    rl = cv = None
    if cfg.q is None:
        rl = rarld(y, X_cal, tau, cfg.fitter, max_q=cfg.max_q, alpha=cfg.lb_alpha,
                   k=k, auto_k=use_pca and k is None and cfg.auto_k, k_min=cfg.k_min,
                   k_max=cfg.k_max, n_folds=cfg.n_folds, absorb=cfg.absorb, config=qcfg,
                   executor=executor)
        q, k, model, X, pca = rl.q, rl.k, rl.model, rl.design, rl.pca
        if rl.cv_reports:
            cv = rl.cv_reports[-1]
    else:
        q = int(cfg.q)
        if use_pca and k is None:
            if cfg.auto_k:
                cv = blocked_cv_select_k(y, X_cal, q, tau, cfg.fitter, k_min=cfg.k_min,
                                         k_max=cfg.k_max, n_folds=cfg.n_folds, absorb=cfg.absorb,
                                         config=qcfg, executor=executor)
                k = cv.selected_k
            else:
                k = min(X_cal.shape[1], X_cal.shape[0] - 1)
        X, pca = build_design(X_cal, k)
        model = fit_model(cfg.fitter, y, X, q, tau, config=qcfg)
    if not model.converged:
        warnings.append("final fit stopped without meeting the convergence tolerance; best iterate used")
    model.phi.require_stationary()
    Xf = pca.design(X_future, k) if pca is not None else np.column_stack(
        [np.ones(X_future.shape[0]), X_future])
    dist = estimate_innovation_distribution(model, cfg.innovation, cfg.center)
    blocks = []
    if cfg.correct_sigma:
        sc, blocks = overfit_corrected_sigma(y, X_cal, q, k, tau, cfg.fitter, cfg.n_folds,
                                             cfg.absorb, qcfg, executor)
        dist = dist.with_sigma(sc)
    return FittedPipeline(y=y, X=X, X_future=Xf, model=model, q=q, k=k, pca=pca, dist=dist,
                          sigma_blocks=blocks, rarld=rl, cv=cv, warnings=warnings)


def _point_estimates(fp):
    """Conditional-quantile points: in-sample from observed residuals, then the mean recursion."""
    model, dist = fp.model, fp.dist
    inside = model.fitted_quantile(fp.y)
    m = fp.X_future.shape[0]
    if m == 0:
        return inside, np.zeros(0)
    q = model.q
    phi = model.phi.phi
    buf = np.concatenate([model.residuals[model.residuals.size - q:] if q else np.zeros(0),
                          np.zeros(m)])
    out = fp.X_future @ model.beta
    for h in range(m):
        i = q + h
        ar = float(phi @ buf[i - q: i][::-1]) if q else 0.0
        out[h] += ar
        buf[i] = ar + dist.mu
    return inside, out


def _innovation_interval(dist, alpha):
    """Quantiles of the simulation law for one innovation (Gaussian approximation)."""
    z_lo, z_hi = float(normal_ppf(alpha / 2)), float(normal_ppf(1 - alpha / 2))
    return dist.location + dist.scale * z_lo, dist.location + dist.scale * z_hi


def reconstruct(panel, config=None, fitted=None):
    """Run the full pipeline on a panel.

    In-sample rows carry the fitted conditional quantile with an innovation
    interval based on the overfit-corrected scale (prediction band) or the
    bootstrap conditional-quantile band. Reconstruction rows carry per-step
    bootstrap percentile bands.
    """
    cfg = (config or ReconstructConfig()).validate()
    order, y, X_cal, X_fut = _model_arrays(panel)
    n, m = y.size, X_fut.shape[0]
    with _executor(cfg.threads) as ex:
        fp = fitted or fit_pipeline(y, X_cal, X_fut, cfg, ex)
        inside, outside = _point_estimates(fp)
        ens = None
        need_boot = cfg.bootstrap > 0 and (m > 0 or cfg.band == "quantile")
        if need_boot:
            ens = bootstrap_paths(fp.model, fp.dist, fp.X, fp.X_future, fp.y, B=cfg.bootstrap,
                                  seed=cfg.seed, burn_in=cfg.burn_in, config=QuartsConfig(max_iter=cfg.max_iter),
                                  executor=ex, k=fp.k, drop_nonconverged=cfg.drop_nonconverged)
        coef = None
        if cfg.coef_bootstrap > 0:
            cens = bootstrap_coefficients(fp.model, fp.dist, fp.X, B=cfg.coef_bootstrap,
                                          seed=cfg.seed + 1, burn_in=cfg.burn_in,
                                          config=QuartsConfig(max_iter=cfg.max_iter), executor=ex,
                                          k=fp.k, drop_nonconverged=cfg.drop_nonconverged)
            names = None
            if fp.pca is not None:
                names = ["intercept", *panel.names]
            coef = coefficient_pvalues(cens, fp.model.beta, pca=fp.pca, alpha=cfg.alpha, names=names)

    if cfg.band == "prediction" or ens is None:
        lo_off, hi_off = _innovation_interval(fp.dist, cfg.alpha)
        in_lo, in_hi = inside + lo_off, inside + hi_off
    else:
        in_lo, in_hi = percentile_bands(ens.quantile_in_sample, cfg.alpha)
    if m and ens is not None:
        target = "prediction" if cfg.band == "prediction" else "conditional_quantile"
        out_lo, out_hi = ens.bands(target, cfg.alpha)
    else:
        out_lo = out_hi = np.full(m, np.nan)

    point_m = np.concatenate([inside, outside])
    lo_m = np.concatenate([in_lo, out_lo])
    hi_m = np.concatenate([in_hi, out_hi])
    ins_m = np.concatenate([np.ones(n, bool), np.zeros(m, bool)])
    T = n + m
    point, lower, upper, ins = (np.empty(T), np.empty(T), np.empty(T), np.empty(T, bool))
    point[order], lower[order], upper[order], ins[order] = point_m, lo_m, hi_m, ins_m

    df = cfg.smooth_df if cfg.smooth_df is not None else default_smooth_df(T)
    if T >= 3 and np.all(np.isfinite(lower)):
        chron = np.argsort(panel.time, kind="stable")
        sp, sl, su = (np.empty(T) for _ in range(3))
        for src, dst in ((point, sp), (lower, sl), (upper, su)):
            dst[chron] = smooth(src[chron], df)
    else:
        sp, sl, su = point.copy(), lower.copy(), upper.copy()

    meta = _metadata(panel, cfg, fp, ens, coef, df)
    inst = np.where(panel.calibration, panel.instrumental, np.nan)
    return ReconstructionResult(time=panel.time.copy(), point=point, lower=lower, upper=upper,
                                in_sample=ins, smoothed_point=sp, smoothed_lower=sl,
                                smoothed_upper=su, metadata=meta, instrumental=inst,
                                pipeline={"fit": fp, "ensemble": ens, "coefficients": coef})


def _metadata(panel, cfg, fp, ens, coef, df):
    dist = fp.dist
    meta = {
        "version": __version__,
        "config": cfg.as_dict(),
        "tau": float(cfg.tau),
        "fitter": cfg.fitter,
        "q": fp.q,
        "k": fp.k,
        "beta": fp.model.beta.tolist(),
        "phi": fp.model.phi.phi.tolist(),
        "converged": bool(fp.model.converged),
        "iterations": int(fp.model.iterations),
        "innovation": dist.as_dict(),
        "sigma_blocks": list(fp.sigma_blocks),
        "seed": cfg.seed,
        "B": cfg.bootstrap,
        "smooth_df": df,
        "n_calibration": int(panel.n),
        "n_reconstruction": int(panel.m),
        "hindcast": bool(panel.hindcast),
        "proxies": panel.filter_report,
        "pca_scaling": "correlation" if fp.pca is not None else None,
        "band": cfg.band,
        "band_type": "pointwise percentile envelope of joint bootstrap paths",
        "in_sample_band": ("fitted conditional quantile plus Gaussian innovation interval "
                           "with the overfit-corrected scale") if cfg.band == "prediction"
        else "bootstrap percentile band of the in-sample conditional quantile",
        "innovation_centering": ("Gaussian shifted so its tau-quantile is zero; mu is the "
                                 "sample mean used in the point recursion")
        if dist.center == "quantile" else "Gaussian centered at the sample mean",
        "warnings": list(fp.warnings),
    }
    if fp.pca is not None:
        meta["pca"] = fp.pca.as_dict()
    if fp.cv is not None:
        meta["cv"] = fp.cv.as_dict()
    if fp.rarld is not None:
        meta["rarld"] = fp.rarld.as_dict()
    if ens is not None:
        meta["bootstrap"] = ens.summary()
    if coef is not None:
        meta["coefficients"] = list(coef.rows())
        meta["coefficient_basis"] = coef.basis
    if cfg.fitter == "gls" and cfg.q is not None and cfg.k is not None:
        meta["warnings"].append(
            "q and k fixed by hand for the GLS baseline; treat the bands as an optimistic lower bound"
        )
    return meta


@dataclass
class QuantileFamily:
    taus: list
    results: dict
    failures: dict
    crossing: np.ndarray
    time: np.ndarray

    def central_mask(self, fraction=0.8):
        T = self.time.size
        cut = int(round(T * (1 - fraction) / 2))
        chron = np.argsort(self.time, kind="stable")
        mask = np.zeros(T, dtype=bool)
        mask[chron[cut: T - cut]] = True
        return mask

    def crossing_fraction(self, central=True):
        if self.crossing.size == 0:
            return 0.0
        mask = self.central_mask() if central else np.ones(self.time.size, bool)
        return float(np.mean(self.crossing[mask]))

    def k_values(self):
        return {t: r.metadata["k"] for t, r in self.results.items()}


def fit_quantile_family(panel, taus=DEFAULT_TAUS, config=None):
    """Fit each quantile level independently; bands are conditional-quantile bands.

    Returns the successful fits plus a failure log; the crossing report flags
    time steps where the point estimates are not ordered by ``tau``.
    """
    base = config or ReconstructConfig()
    taus = sorted(float(QuantileLevel(t)) for t in taus)
    results, failures = {}, {}
    for t in taus:
        cfg = ReconstructConfig(**{**base.as_dict(), "tau": t, "band": "quantile"})
        try:
            results[t] = reconstruct(panel, cfg)
        except Exception as exc:
            failures[t] = f"{type(exc).__name__}: {exc}"
    ok = [t for t in taus if t in results]
    if len(ok) >= 2:
        pts = np.vstack([results[t].point for t in ok])
        crossing = np.any(np.diff(pts, axis=0) < 0, axis=0)
    else:
        crossing = np.zeros(panel.time.size, dtype=bool)
    return QuantileFamily(taus=ok, results=results, failures=failures, crossing=crossing,
                          time=panel.time.copy())
