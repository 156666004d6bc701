"""Command-line interface.

Every command writes its outputs plus ``metadata.json`` into ``--out``. The
metadata echoes the effective settings under ``"cli"``; passing the file
back with ``--config`` reruns the command with identical results. Settings
resolve as: command-line flag, then ``--config`` file, then built-in default.

Exit codes: 0 success, 1 runtime or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import bootstrap_coefficients, coefficient_pvalues
from .data import (
    ProxyPanel,
    SyntheticSpec,
    generate_synthetic_panel,
    load_panel,
    serialize_result,
    write_json,
    write_panel,
    write_table,
)
from .engine import QuartsConfig
from .reconstruct import (
    DEFAULT_TAUS,
    ReconstructConfig,
    _executor,
    _model_arrays,
    fit_pipeline,
    fit_quantile_family,
    reconstruct,
)
from .stats import anderson_darling_normal, diagnose, normal_qq

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# defaults applied after flags and config file are merged
DEFAULTS = {
    "tau": 0.5,
    "q": None,
    "auto_lag": None,
    "k": None,
    "auto_k": None,
    "raw_predictors": False,
    "fitter": "quarts",
    "seed": 0,
    "threads": 1,
    "max_q": 5,
    "k_max": None,
    "absorb": 4,
    "folds": 10,
    "innovation": "gaussian",
    "alpha": 0.05,
    "calibration": None,
    "recon_span": None,
    "horizon": None,
    "smooth_df": None,
    "band": "prediction",
    "plot_data": False,
    "taus": ",".join(f"{t:g}" for t in DEFAULT_TAUS),
    "n": 150,
    "m": 100,
    "p": 5,
    "beta": None,
    "phi": "0.5",
    "scale": 1.0,
    "df": 3.0,
    "forecast": False,
    "end_year": 2000,
    "max_lag": None,
}
BOOTSTRAP_DEFAULT = {"fit": 1000, "reconstruct": 500, "quantiles": 500}
PATH_KEYS = ("proxies", "instrumental", "out")


def _add_common(p, panel=True):
    p.add_argument("--config", help="JSON settings file (a previous metadata.json works)")
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, help="master random seed (default 0)")
    if not panel:
        return
    p.add_argument("--proxies", help="proxy CSV: year column then one column per proxy")
    p.add_argument("--instrumental", help="instrumental CSV with header year,value")
    p.add_argument("--calibration", help="calibration years START:END (default: instrumental years)")
    p.add_argument("--tau", type=float, help="quantile level in [0.001, 0.999] (default 0.5)")
    lag = p.add_mutually_exclusive_group()
    lag.add_argument("--q", type=int, help="fixed AR order of the residuals")
    lag.add_argument("--auto-lag", action="store_const", const=True,
                     help="select q by Ljung-Box lag determination (default when --q is absent)")
    comp = p.add_mutually_exclusive_group()
    comp.add_argument("--k", type=int, help="fixed number of principal components")
    comp.add_argument("--auto-k", action="store_const", const=True,
                      help="select k by blocked cross-validation (default when --k is absent)")
    comp.add_argument("--raw-predictors", action="store_const", const=True,
                      help="regress on the proxies directly, without principal components")
    p.add_argument("--fitter", choices=["quarts", "gls"], help="quantile (default) or least-squares fitter")
    p.add_argument("--max-q", type=int, help="largest AR order tried by lag selection (default 5)")
    p.add_argument("--k-max", type=int, help="largest k tried by cross-validation (default min(20, p, n/10))")
    p.add_argument("--absorb", type=int, help="leading points reserved for edge absorption (default 4)")
    p.add_argument("--folds", type=int, help="number of contiguous CV blocks (default 10)")
    p.add_argument("--innovation", choices=["gaussian", "empirical", "asymmetric_laplace"],
                   help="innovation law for the bootstrap (default gaussian)")
    p.add_argument("--alpha", type=float, help="band / interval level, 1 - coverage (default 0.05)")
    p.add_argument("--threads", type=int, help="worker threads for CV and bootstrap (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quarts", description="Quantile regression with AR residuals: fitting and reconstruction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("fit", help="fit a model and bootstrap its coefficients")
    _add_common(p)
    p.add_argument("--bootstrap", type=int, help="coefficient bootstrap replications (default 1000)")

    p = sub.add_parser("reconstruct", help="hindcast with bootstrap bands")
    _add_common(p)
    p.add_argument("--recon-span", help="reconstruction years START:END (default: all non-calibration years)")
    p.add_argument("--horizon", type=int, help="limit the reconstruction to this many years next to calibration")
    p.add_argument("--bootstrap", type=int, help="path bootstrap replications (default 500)")
    p.add_argument("--smooth-df", type=float, help="smoothing spline degrees of freedom (default 0.115 * length)")
    p.add_argument("--band", choices=["prediction", "quantile"],
                   help="prediction band for y or confidence band for the conditional quantile")
    p.add_argument("--plot-data", action="store_const", const=True,
                   help="also write plot_data.csv in long format")

    p = sub.add_parser("quantiles", help="fit a family of conditional quantiles")
    _add_common(p)
    p.add_argument("--taus", help="comma-separated quantile levels (default 0.1,0.25,0.5,0.75,0.9)")
    p.add_argument("--recon-span", help="reconstruction years START:END")
    p.add_argument("--horizon", type=int, help="limit the reconstruction to this many years next to calibration")
    p.add_argument("--bootstrap", type=int, help="path bootstrap replications per level (default 500)")
    p.add_argument("--smooth-df", type=float, help="smoothing spline degrees of freedom")

    p = sub.add_parser("diagnose", help="ACF, PACF, Ljung-Box, Anderson-Darling and Q-Q data")
    _add_common(p)
    p.add_argument("--max-lag", type=int, help="largest lag reported (default max(LB lag, min(20, n-1)))")

    p = sub.add_parser("simulate", help="write a synthetic panel and its truth record")
    _add_common(p, panel=False)
    p.add_argument("--n", type=int, help="calibration length (default 150)")
    p.add_argument("--m", type=int, help="reconstruction length (default 100)")
    p.add_argument("--p", type=int, help="number of proxies (default 5)")
    p.add_argument("--beta", help="comma-separated coefficients, intercept first (default all ones)")
    p.add_argument("--phi", help="comma-separated AR coefficients (default 0.5)")
    p.add_argument("--innovation", choices=["gaussian", "laplace", "student_t", "none"],
                   help="innovation distribution (default gaussian)")
    p.add_argument("--scale", type=float, help="innovation scale (default 1)")
    p.add_argument("--df", type=float, help="degrees of freedom for student_t (default 3)")
    p.add_argument("--forecast", action="store_const", const=True,
                   help="put the reconstruction after the calibration span instead of before")
    p.add_argument("--end-year", type=int, help="last calendar year of the panel (default 2000)")
    return parser


def _load_config(path, command):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    if "cli" in data:
        data = data["cli"]
    if "command" in data and data["command"] != command:
        raise UsageError(f"--config was written by '{data['command']}', not '{command}'")
    data.pop("command", None)
    return data


def resolve(args):
    """Merge flags over config file over defaults into one settings dict."""
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    conf = _load_config(args.config, args.command) if args.config else {}
    unknown = set(conf) - set(flags)
    if unknown:
        raise UsageError(f"--config: unknown keys {sorted(unknown)}")
    eff = {}
    for key, val in flags.items():
        if val is None:
            val = conf.get(key)
        if val is None:
            val = BOOTSTRAP_DEFAULT.get(args.command) if key == "bootstrap" else DEFAULTS.get(key)
        eff[key] = val
    # an explicit q or k on the command line overrides an automatic choice from the file
    if flags.get("q") is not None:
        eff["auto_lag"] = None
    if flags.get("k") is not None:
        eff["auto_k"] = eff["raw_predictors"] = None
    if flags.get("auto_lag"):
        eff["q"] = None
    if flags.get("auto_k") or flags.get("raw_predictors"):
        eff["k"] = None
    for key in PATH_KEYS:
        if eff.get(key):
            eff[key] = str(Path(eff[key]).resolve())
    return eff


def _validate(eff, command):
    if not eff.get("out"):
        raise UsageError("--out is required")
    if command != "simulate":
        for key in ("proxies", "instrumental"):
            if not eff.get(key):
                raise UsageError(f"--{key} is required")
        tau = eff["tau"]
        if not 0.001 <= float(tau) <= 0.999:
            raise UsageError(f"--tau must lie in [0.001, 0.999], got {tau}")
        if not 0 < float(eff["alpha"]) < 1:
            raise UsageError(f"--alpha must lie in (0, 1), got {eff['alpha']}")
        if eff.get("q") is not None and eff["q"] < 0:
            raise UsageError("--q must be non-negative")
        if eff.get("k") is not None and eff["k"] < 1:
            raise UsageError("--k must be positive")
        if eff.get("threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        if eff.get("bootstrap") is not None and eff["bootstrap"] < 0:
            raise UsageError("--bootstrap must be non-negative")
        for key in ("calibration", "recon_span"):
            if eff.get(key):
                _span(eff[key], key)
    if command == "quantiles":
        for t in _taus(eff["taus"]):
            if not 0.001 <= t <= 0.999:
                raise UsageError(f"--taus entries must lie in [0.001, 0.999], got {t}")
    if command == "simulate":
        if eff["n"] < 2 or eff["m"] < 0 or eff["p"] < 1:
            raise UsageError("--n must be >= 2, --m >= 0 and --p >= 1")


def _span(text, key):
    try:
        a, b = str(text).split(":")
        return int(a), int(b)
    except ValueError:
        raise UsageError(f"--{key.replace('_', '-')} must look like START:END, got {text!r}") from None


def _taus(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--taus must be comma-separated numbers, got {text!r}") from None


def _floats(text, flag):
    if text is None:
        return None
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{flag} must be comma-separated numbers, got {text!r}") from None


def _panel(eff):
    cal = _span(eff["calibration"], "calibration") if eff.get("calibration") else None
    rec = _span(eff["recon_span"], "recon_span") if eff.get("recon_span") else None
    panel = load_panel(eff["proxies"], eff["instrumental"], calibration=cal, reconstruction=rec)
    h = eff.get("horizon")
    if h is not None:
        if h < 0:
            raise UsageError("--horizon must be non-negative")
        order = panel.model_order()
        keep = np.zeros(panel.time.size, dtype=bool)
        keep[order[: panel.n + min(h, panel.m)]] = True
        panel = ProxyPanel(panel.time[keep], panel.proxies[keep], panel.names,
                           panel.instrumental[keep], panel.calibration[keep], panel.filter_report)
    return panel


def _config(eff, command, correct_sigma=True):
    use_pca = not eff.get("raw_predictors")
    return ReconstructConfig(
        tau=float(eff["tau"]), fitter=eff["fitter"], q=eff.get("q"), k=eff.get("k"),
        auto_k=True, use_pca=use_pca, max_q=eff["max_q"], k_max=eff.get("k_max"),
        n_folds=eff["folds"], absorb=eff["absorb"], innovation=eff["innovation"],
        bootstrap=eff["bootstrap"] if command in ("reconstruct", "quantiles") else 0,
        alpha=float(eff["alpha"]), band=eff.get("band") or "prediction",
        smooth_df=eff.get("smooth_df"), seed=eff["seed"], threads=eff["threads"],
        correct_sigma=correct_sigma,
    ).validate()


def _meta(eff, command, extra):
    cli = {"command": command, **eff}
    return {"version": __version__, "cli": cli, **extra}




def cmd_fit(eff, out):
    panel = _panel(eff)
    cfg = _config(eff, "fit")
    _, y, X_cal, X_fut = _model_arrays(panel)
    with _executor(cfg.threads) as ex:
        fp = fit_pipeline(y, X_cal, X_fut, cfg, ex)
        rows = []
        B = int(eff["bootstrap"])
        extra = {}
        if B > 0:
            ens = bootstrap_coefficients(fp.model, fp.dist, fp.X, B=B, seed=cfg.seed,
                                         config=QuartsConfig(), executor=ex, k=fp.k)
            proxy_names = ["intercept", *panel.names]
            if fp.pca is not None:
                pcs = ["intercept"] + [f"pc{j}" for j in range(1, fp.model.beta.size)]
                infs = [coefficient_pvalues(ens, fp.model.beta, alpha=cfg.alpha, names=pcs),
                        coefficient_pvalues(ens, fp.model.beta, pca=fp.pca, alpha=cfg.alpha,
                                            names=proxy_names)]
            else:
                infs = [coefficient_pvalues(ens, fp.model.beta, alpha=cfg.alpha, names=proxy_names)]
            for inf in infs:
                for r in inf.rows():
                    rows.append([r["name"], inf.basis, r["estimate"], r["sd"], r["lower"],
                                 r["upper"], r["p_value"]])
            extra["bootstrap"] = ens.summary()
            phi_sd = ens.phis.std(axis=0, ddof=1) if ens.phis.shape[0] > 1 else np.zeros(fp.q)
        else:
            names = ["intercept", *panel.names] if fp.k is None else \
                ["intercept"] + [f"pc{j}" for j in range(1, fp.model.beta.size)]
            for nm, b in zip(names, fp.model.beta):
                rows.append([nm, "predictor" if fp.k is None else "principal-component",
                             b, np.nan, np.nan, np.nan, np.nan])
            phi_sd = np.full(fp.q, np.nan)
    write_table(out / "coefficients.csv",
                ["name", "basis", "estimate", "sd", "lower", "upper", "p_value"], rows)
    write_table(out / "ar_coefficients.csv", ["lag", "phi", "sd"],
                ([j + 1, v, s] for j, (v, s) in enumerate(zip(fp.model.phi.phi, phi_sd))))
    diag = diagnose(fp.model.innovations)
    meta = _meta(eff, "fit", {
        "q": fp.q, "k": fp.k, "tau": cfg.tau, "fitter": cfg.fitter,
        "converged": bool(fp.model.converged), "innovation": fp.dist.as_dict(),
        "sigma_blocks": fp.sigma_blocks, "diagnostics": diag.as_dict(),
        "proxies": panel.filter_report, "warnings": fp.warnings, **extra,
    })
    if cfg.fitter == "gls" and eff.get("q") is not None and eff.get("k") is not None:
        meta["warnings"].append(
            "q and k fixed by hand for the GLS baseline; treat the bands as an optimistic lower bound")
    if fp.rarld is not None:
        meta["rarld"] = fp.rarld.as_dict()
    if fp.cv is not None:
        meta["cv"] = fp.cv.as_dict()
    write_json(out / "metadata.json", meta)
    return f"q={fp.q} k={fp.k}: wrote {out / 'coefficients.csv'}"


def _plot_rows(result):
    for i, t in enumerate(result.time):
        for name in ("point", "lower", "upper", "smoothed_point", "smoothed_lower", "smoothed_upper"):
            yield [int(t), name, getattr(result, name)[i]]
        if result.instrumental is not None and np.isfinite(result.instrumental[i]):
            yield [int(t), "instrumental", result.instrumental[i]]


def cmd_reconstruct(eff, out):
    panel = _panel(eff)
    cfg = _config(eff, "reconstruct")
    result = reconstruct(panel, cfg)
    result.metadata["cli"] = {"command": "reconstruct", **eff}
    serialize_result(result, out / "reconstruction.csv", metadata_path=out / "metadata.json")
    if eff.get("plot_data"):
        write_table(out / "plot_data.csv", ["time", "series", "value"], _plot_rows(result))
    return f"q={result.metadata['q']} k={result.metadata['k']}: wrote {out / 'reconstruction.csv'}"


def cmd_quantiles(eff, out):
    panel = _panel(eff)
    cfg = _config(eff, "quantiles")
    fam = fit_quantile_family(panel, _taus(eff["taus"]), cfg)
    per_tau = {}
    for t, res in fam.results.items():
        name = f"quantile_{t:g}.csv"
        serialize_result(res, out / name, metadata_path=out / f"quantile_{t:g}.meta.json")
        per_tau[f"{t:g}"] = {"file": name, "q": res.metadata["q"], "k": res.metadata["k"]}
    write_table(out / "crossing.csv", ["time", "crossing"], zip(fam.time, fam.crossing))
    write_json(out / "metadata.json", _meta(eff, "quantiles", {
        "levels": per_tau, "failures": {f"{t:g}": m for t, m in fam.failures.items()},
        "crossing_fraction_central": fam.crossing_fraction(True),
        "crossing_fraction_all": fam.crossing_fraction(False),
    }))
    if not fam.results:
        raise RuntimeError("every quantile level failed: " + "; ".join(fam.failures.values()))
    ks = ", ".join(f"tau={t}: k={v['k']}" for t, v in per_tau.items())
    return f"{ks}; wrote {len(per_tau)} files to {out}"


def cmd_diagnose(eff, out):
    panel = _panel(eff)
    cfg = _config(eff, "diagnose", correct_sigma=False)
    _, y, X_cal, X_fut = _model_arrays(panel)
    with _executor(cfg.threads) as ex:
        fp = fit_pipeline(y, X_cal, X_fut, cfg, ex)
    d = fp.model.innovations
    rep = diagnose(d, max_lag=eff.get("max_lag"))
    pacf = [np.nan, *rep.pacf]
    write_table(out / "acf.csv", ["lag", "acf", "pacf"],
                ([k, rep.acf[k], pacf[k]] for k in range(rep.acf.size)))
    write_table(out / "ljung_box.csv", ["lag", "Q", "p_value"], rep.ljung_box)
    theo, samp = normal_qq(d)
    write_table(out / "qq.csv", ["theoretical", "sample"], zip(theo, samp))
    write_table(out / "innovations.csv", ["index", "innovation"], enumerate(d))
    a2, pv = anderson_darling_normal(d)
    extra = {"q": fp.q, "k": fp.k, "diagnostics": rep.as_dict(),
             "anderson_darling": {"A2_star": a2, "p_value": pv}, "innovation": fp.dist.as_dict()}
    if fp.rarld is not None:
        extra["rarld"] = fp.rarld.as_dict()
    write_json(out / "metadata.json", _meta(eff, "diagnose", extra))
    return f"q={fp.q}: Ljung-Box p={rep.lb_pvalue:.4g}, Anderson-Darling p={pv:.4g}"


def cmd_simulate(eff, out):
    spec = SyntheticSpec(
        n=eff["n"], m=eff["m"], p=eff["p"], beta=_floats(eff.get("beta"), "beta"),
        phi=_floats(eff.get("phi"), "phi") or [], innovation=eff.get("innovation") or "gaussian",
        scale=float(eff["scale"]), df=float(eff["df"]), seed=eff["seed"],
        hindcast=not eff.get("forecast"), end_year=eff["end_year"],
    )
    if spec.innovation not in ("gaussian", "laplace", "student_t", "none"):
        raise UsageError(f"--innovation {spec.innovation!r} is not a simulation law")
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    panel, truth = generate_synthetic_panel(spec)
    write_panel(panel, out / "proxies.csv", out / "instrumental.csv")
    write_table(out / "truth.csv", ["year", "y", "residual", "calibration"],
                zip(panel.time, truth["y"], truth["residuals"], panel.calibration))
    write_json(out / "truth.json", {k: v for k, v in truth.items()
                                     if k not in ("y", "residuals", "innovations_model_time")})
    write_json(out / "metadata.json", _meta(eff, "simulate", {}))
    return f"wrote synthetic panel (n={spec.n}, m={spec.m}, p={spec.p}) to {out}"


COMMANDS = {
    "fit": cmd_fit,
    "reconstruct": cmd_reconstruct,
    "quantiles": cmd_quantiles,
    "diagnose": cmd_diagnose,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        eff = resolve(args)
        _validate(eff, args.command)
        out = Path(eff["out"])
        out.mkdir(parents=True, exist_ok=True)
        msg = COMMANDS[args.command](eff, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"quarts {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"quarts {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(msg)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
