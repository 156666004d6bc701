"""Panel assembly, CSV I/O, result serialization and synthetic panels.

File formats
------------
proxies CSV
    header ``year,<id1>,<id2>,...``; one row per year, consecutive integer
    years in either direction. Missing values are empty cells or ``NA``.
instrumental CSV
    header ``year,value``; the years must be a contiguous sub-range of the
    proxy years.
result CSV
    header ``time,point,lower,upper,in_sample,smoothed_point,smoothed_lower,smoothed_upper``
    plus a JSON metadata sidecar.

Numbers are parsed with ``float`` (locale independent) and written with
``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ar import ARCoefficients, simulate_stationary
from .rng import make_rng

__all__ = [
    "SchemaError",
    "Series",
    "ProxyPanel",
    "read_proxies",
    "read_instrumental",
    "load_panel",
    "build_panel",
    "write_panel",
    "SyntheticSpec",
    "generate_synthetic_panel",
    "RESULT_HEADER",
    "serialize_result",
    "load_result",
    "write_json",
    "write_table",
]

MISSING = ("", "NA")
RESULT_HEADER = "time,point,lower,upper,in_sample,smoothed_point,smoothed_lower,smoothed_upper"


class SchemaError(ValueError):
    """Input file does not follow the documented layout."""


@dataclass(frozen=True)
class Series:
    """Values on strictly monotone integer time labels."""

    values: np.ndarray
    time_index: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        t = np.asarray(self.time_index).ravel()
        if v.size < 1 or v.size != t.size:
            raise ValueError("series needs matching, non-empty values and time labels")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite values")
        if not np.all(np.equal(np.mod(t, 1), 0)):
            raise ValueError("time labels must be integers")
        t = t.astype(np.int64)
        d = np.diff(t)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("time labels must be strictly monotone")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time_index", t)

    @property
    def ascending(self):
        return self.time_index.size < 2 or bool(self.time_index[1] > self.time_index[0])

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ProxyPanel:
    """Proxy matrix with an instrumental response on the calibration rows.

    Rows are in the order given (ascending or descending years). Only the
    calibration and reconstruction rows are kept; ``calibration`` marks the
    former.
    """

    time: np.ndarray
    proxies: np.ndarray
    names: list
    instrumental: np.ndarray
    calibration: np.ndarray
    filter_report: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.time, dtype=np.int64)
        P = np.asarray(self.proxies, dtype=float)
        y = np.asarray(self.instrumental, dtype=float)
        cal = np.asarray(self.calibration, dtype=bool)
        if P.ndim != 2 or P.shape[0] != t.size or y.size != t.size or cal.size != t.size:
            raise ValueError("panel arrays disagree in length")
        if len(self.names) != P.shape[1]:
            raise ValueError("one name per proxy column required")
        d = np.diff(t)
        if d.size and not (np.all(d == 1) or np.all(d == -1)):
            raise ValueError("panel years must be consecutive")
        if not np.all(np.isfinite(P)):
            raise ValueError("panel proxies contain missing values")
        if not np.all(np.isfinite(y[cal])):
            raise ValueError("instrumental values missing inside the calibration span")
        idx = np.flatnonzero(cal)
        if idx.size == 0:
            raise ValueError("empty calibration span")
        if np.any(np.diff(idx) != 1):
            raise ValueError("calibration span must be contiguous")
        if not (idx[0] == 0 or idx[-1] == t.size - 1):
            raise ValueError("reconstruction span must lie on one side of the calibration span")
        for name, arr in (("time", t), ("proxies", P), ("instrumental", y), ("calibration", cal)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "names", list(self.names))

    @property
    def p(self):
        return self.proxies.shape[1]

    @property
    def n(self):
        return int(self.calibration.sum())

    @property
    def m(self):
        return int(self.time.size - self.n)

    @property
    def hindcast(self):
        """True when the reconstruction years precede the calibration years.

        A panel without reconstruction rows counts as a hindcast, so its
        model time also runs backwards from the latest year.
        """
        if self.m == 0:
            return True
        cal_years = self.time[self.calibration]
        return bool(self.time[~self.calibration].max() < cal_years.min())

    def model_order(self):
        """Row indices in model time: calibration first, ending next to the reconstruction.

        Model time runs backwards in calendar time for a hindcast.
        """
        idx = np.argsort(self.time, kind="stable")
        return idx[::-1] if self.hindcast else idx

    def reversed(self):
        return ProxyPanel(self.time[::-1], self.proxies[::-1], self.names,
                          self.instrumental[::-1], self.calibration[::-1], dict(self.filter_report))


# ---------------------------------------------------------------------------
# reading


def _cell(value, lineno, column):
    v = value.strip()
    if v in MISSING:
        return math.nan
    try:
        out = float(v)
    except ValueError:
        raise SchemaError(f"line {lineno}, column {column!r}: cannot parse {value!r} as a number") from None
    if not math.isfinite(out):
        raise SchemaError(f"line {lineno}, column {column!r}: non-finite value {value!r}")
    return out


def _year(value, lineno):
    try:
        return int(value.strip())
    except ValueError:
        raise SchemaError(f"line {lineno}, column 'year': {value!r} is not an integer year") from None


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise SchemaError(f"{path}: file is empty")
    return rows


def _check_years(years, path):
    d = np.diff(years)
    if d.size and not (np.all(d == 1) or np.all(d == -1)):
        bad = int(np.flatnonzero(np.abs(d) != 1)[0])
        raise SchemaError(f"{path}: years are not consecutive near {years[bad]} -> {years[bad + 1]}")


def read_proxies(path):
    """Return ``(years, matrix, names)``; missing cells become NaN."""
    rows = _read_rows(path)
    (hl, header), body = rows[0], rows[1:]
    header = [h.strip() for h in header]
    if not header or header[0].lower() != "year":
        raise SchemaError(f"{path}: line {hl}: first column must be 'year'")
    names = header[1:]
    if not names:
        raise SchemaError(f"{path}: no proxy columns")
    if len(set(names)) != len(names):
        raise SchemaError(f"{path}: duplicate proxy identifiers")
    years, data = [], []
    for lineno, r in body:
        if len(r) != len(header):
            raise SchemaError(f"{path}: line {lineno}: expected {len(header)} cells, found {len(r)}")
        years.append(_year(r[0], lineno))
        data.append([_cell(c, lineno, names[j]) for j, c in enumerate(r[1:])])
    if not years:
        raise SchemaError(f"{path}: no data rows")
    years = np.array(years, dtype=np.int64)
    _check_years(years, path)
    return years, np.array(data, dtype=float), names


def read_instrumental(path):
    rows = _read_rows(path)
    (hl, header), body = rows[0], rows[1:]
    header = [h.strip().lower() for h in header]
    if header != ["year", "value"]:
        raise SchemaError(f"{path}: line {hl}: header must be 'year,value'")
    years, vals = [], []
    for lineno, r in body:
        if len(r) != 2:
            raise SchemaError(f"{path}: line {lineno}: expected 2 cells, found {len(r)}")
        v = _cell(r[1], lineno, "value")
        if math.isnan(v):
            raise SchemaError(f"{path}: line {lineno}: instrumental value missing")
        years.append(_year(r[0], lineno))
        vals.append(v)
    years = np.array(years, dtype=np.int64)
    _check_years(years, path)
    return years, np.array(vals, dtype=float)


def _span(spec, years, what):
    if spec is None:
        return None
    a, b = (int(v) for v in spec)
    lo, hi = min(a, b), max(a, b)
    if lo < years.min() or hi > years.max():
        raise ValueError(f"{what} span {lo}-{hi} outside the proxy years {years.min()}-{years.max()}")
    return lo, hi


def build_panel(years, proxies, names, inst_years, inst_values, calibration=None, reconstruction=None):
    """Assemble and availability-filter a panel from in-memory arrays.

    ``calibration`` defaults to the instrumental years; ``reconstruction``
    defaults to every other proxy year. Proxies with any missing value on
    the combined span are dropped.
    """
    years = np.asarray(years, dtype=np.int64)
    P = np.asarray(proxies, dtype=float)
    inst_years = np.asarray(inst_years, dtype=np.int64)
    inst_values = np.asarray(inst_values, dtype=float)
    inst = dict(zip(inst_years.tolist(), inst_values.tolist()))
    cal = _span(calibration, years, "calibration")
    if cal is None:
        cal = (int(inst_years.min()), int(inst_years.max()))
    missing_inst = [yr for yr in range(cal[0], cal[1] + 1) if yr not in inst]
    if missing_inst:
        raise ValueError(f"no instrumental value for calibration year(s) {missing_inst[:5]}")
    in_cal = (years >= cal[0]) & (years <= cal[1])
    rec = _span(reconstruction, years, "reconstruction")
    if rec is None:
        in_rec = ~in_cal
    else:
        in_rec = (years >= rec[0]) & (years <= rec[1])
        if np.any(in_rec & in_cal):
            raise ValueError("calibration and reconstruction spans overlap")
    keep_rows = in_cal | in_rec
    rows = np.flatnonzero(keep_rows)
    if np.any(np.diff(rows) != 1):
        raise ValueError("calibration and reconstruction spans are not jointly contiguous")
    complete = np.all(np.isfinite(P[rows]), axis=0)
    kept = [n for n, ok in zip(names, complete) if ok]
    dropped = [n for n, ok in zip(names, complete) if not ok]
    if not kept:
        raise ValueError("no proxy is complete over the calibration and reconstruction spans")
    y = np.array([inst.get(int(yr), math.nan) if c else math.nan
                  for yr, c in zip(years[rows], in_cal[rows])])
    report = {"total": len(names), "retained": len(kept), "dropped": len(dropped),
              "dropped_ids": dropped}
    return ProxyPanel(years[rows], P[rows][:, complete], kept, y, in_cal[rows], report)


def load_panel(proxy_csv_path, instrumental_csv_path, calibration=None, reconstruction=None):
    years, P, names = read_proxies(proxy_csv_path)
    iy, iv = read_instrumental(instrumental_csv_path)
    extra = sorted(set(iy.tolist()) - set(years.tolist()))
    if extra:
        raise SchemaError(f"{instrumental_csv_path}: years {extra[:5]} not present in the proxy file")
    return build_panel(years, P, names, iy, iv, calibration, reconstruction)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "NA" if math.isnan(v) else repr(v)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])


def write_panel(panel, proxy_path, instrumental_path):
    write_table(proxy_path, ["year", *panel.names],
                ([int(t), *row] for t, row in zip(panel.time, panel.proxies)))
    cal = panel.calibration
    write_table(instrumental_path, ["year", "value"],
                ([int(t), v] for t, v in zip(panel.time[cal], panel.instrumental[cal])))


# ---------------------------------------------------------------------------
# synthetic panels


@dataclass
class SyntheticSpec:
    n: int = 150
    m: int = 100
    p: int = 5
    beta: list | None = None
    phi: list = field(default_factory=lambda: [0.5])
    innovation: str = "gaussian"
    scale: float = 1.0
    df: float = 3.0
    seed: int = 0
    hindcast: bool = True
    end_year: int = 2000

    def validate(self):
        if self.n < 2 or self.m < 0 or self.p < 1:
            raise ValueError("need n >= 2, m >= 0 and p >= 1")
        if self.beta is not None and len(self.beta) != self.p + 1:
            raise ValueError("beta must have p + 1 entries (intercept first)")
        if self.innovation not in ("gaussian", "laplace", "student_t", "none"):
            raise ValueError(f"unknown innovation kind {self.innovation!r}")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")
        ARCoefficients(self.phi).require_stationary()


def _innovations(spec, rng, size):
    if spec.innovation == "none" or spec.scale == 0:
        return np.zeros(size)
    if spec.innovation == "gaussian":
        return spec.scale * rng.standard_normal(size)
    if spec.innovation == "laplace":
        return spec.scale * rng.laplace(size=size)
    return spec.scale * rng.standard_t(spec.df, size=size)


def generate_synthetic_panel(spec=None, **kwargs):
    """Simulate a panel from the regression-with-AR-residuals model.

    Model time runs from the calibration start towards the reconstruction,
    so for a hindcast the residual process runs backwards in calendar time.
    Returns ``(panel, truth)``; ``truth`` holds the generating parameters and
    the full response including the unobserved reconstruction values, in
    panel row order.
    """
    if spec is None:
        spec = SyntheticSpec(**kwargs)
    elif kwargs:
        raise TypeError("pass either a SyntheticSpec or keyword arguments")
    spec.validate()
    rng = make_rng(spec.seed)
    T = spec.n + spec.m
    beta = np.ones(spec.p + 1) if spec.beta is None else np.asarray(spec.beta, dtype=float)
    X_raw = rng.standard_normal((T, spec.p))
    delta = _innovations(spec, rng, T + 500)
    eps = simulate_stationary(spec.phi, delta, burn_in=500)
    y_model = beta[0] + X_raw @ beta[1:] + eps
    order = np.arange(T)[::-1] if spec.hindcast else np.arange(T)
    # model index i sits at panel row order[i]
    P = np.empty_like(X_raw)
    y = np.empty(T)
    e = np.empty(T)
    P[order] = X_raw
    y[order] = y_model
    e[order] = eps
    if spec.hindcast:
        years = np.arange(spec.end_year - T + 1, spec.end_year + 1)
    else:
        years = np.arange(spec.end_year - spec.n + 1, spec.end_year - spec.n + 1 + T)
    cal = np.zeros(T, dtype=bool)
    cal[order[: spec.n]] = True
    inst = np.where(cal, y, np.nan)
    names = [f"proxy{j + 1}" for j in range(spec.p)]
    panel = ProxyPanel(years, P, names, inst, cal, {"total": spec.p, "retained": spec.p,
                                                   "dropped": 0, "dropped_ids": []})
    truth = {
        "beta": beta.tolist(),
        "phi": list(map(float, spec.phi)),
        "innovation": spec.innovation,
        "scale": spec.scale,
        "df": spec.df,
        "seed": spec.seed,
        "n": spec.n,
        "m": spec.m,
        "p": spec.p,
        "y": y,
        "residuals": e,
        "innovations_model_time": delta[500:],
    }
    return panel, truth


# ---------------------------------------------------------------------------
# results


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def serialize_result(result, path, format="csv", metadata_path=None):
    """Write a reconstruction table and its JSON metadata sidecar.

    Returns the sidecar path.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    cols = (result.time, result.point, result.lower, result.upper, result.in_sample,
            result.smoothed_point, result.smoothed_lower, result.smoothed_upper)
    write_table(path, RESULT_HEADER.split(","), zip(*cols))
    meta = Path(metadata_path) if metadata_path else sidecar_path(path)
    write_json(meta, result.metadata)
    return meta


def load_result(path, metadata_path=None):
    from .reconstruct import ReconstructionResult

    rows = _read_rows(path)
    header = ",".join(h.strip() for h in rows[0][1])
    if header != RESULT_HEADER:
        raise SchemaError(f"{path}: unexpected header {header!r}")
    cols = list(zip(*[r for _, r in rows[1:]]))
    num = [np.array([_cell(c, 0, "") for c in col]) for col in cols]
    meta_file = Path(metadata_path) if metadata_path else sidecar_path(path)
    metadata = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return ReconstructionResult(
        time=num[0].astype(np.int64), point=num[1], lower=num[2], upper=num[3],
        in_sample=num[4].astype(bool), smoothed_point=num[5], smoothed_lower=num[6],
        smoothed_upper=num[7], metadata=metadata,
    )
