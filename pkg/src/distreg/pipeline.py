"""From raw CSV inputs to fitted models, shock tables and response curves.

Inputs
------
demand CSV
    ``year_month`` (``YYYY-MM``), ``gwh`` and optionally ``effective_days``.
temperature CSV
    ``timestamp`` (ISO 8601), ``region`` and ``temp_c``.

The response is the log demand per effective day minus its 12-month moving
average. The predictor for each month is a transform of the regionally
weighted kernel density of that month's temperatures.
"""

from __future__ import annotations

import calendar
import csv
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .basis import Grid, make_basis, project_many
from .density import DensityEstimate, SampleBatch, density_stats, estimate_density, weighted_average
from .errors import (
    EmptyMonth,
    InvalidConfig,
    LengthMismatch,
    MalformedRow,
    NonPositiveDemand,
    UnknownRegion,
    ValidationError,
)
from .estimator import FittedModel, KRule, PredictorSeries, fit_lagged, rmse
from .shocks import benchmark_response, evaluate_shocks, fraction_shocks, observed_shock, transform_domain_shocks
from .simulation import DGPConfig, bias_experiment, coverage_experiment, rows_to_csv
from .simulation import metadata as simulation_metadata
from .transforms import KINDS, QUANTILE, quantile_from_density, quantile_from_samples, transform

log = logging.getLogger("distreg")

# ---------------------------------------------------------------- config

_TOP_KEYS = {
    "support",
    "transform",
    "basis",
    "eps",
    "kappa",
    "k_rule",
    "bandwidth",
    "quantile_source",
    "quantile_points",
    "level",
    "both_kappas",
    "demand",
    "temperature",
    "regions",
    "shocks",
    "response",
    "simulation",
    "truth",
    "output",
}


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise InvalidConfig(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise InvalidConfig(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class ShockSpec:
    """Reference months (averaged) against event months (averaged)."""

    name: str
    norm: tuple
    extr: tuple
    M: int = 3

    @classmethod
    def from_dict(cls, d: dict) -> "ShockSpec":
        _check_keys(d, {"name", "norm", "extr", "M"}, "shock")
        as_tuple = lambda v: (v,) if isinstance(v, str) else tuple(v)  # noqa: E731
        spec = cls(str(d["name"]), as_tuple(d["norm"]), as_tuple(d["extr"]), int(d.get("M", 3)))
        if not spec.norm or not spec.extr or spec.M < 1:
            raise InvalidConfig(f"shock {spec.name!r} needs reference and event months and M >= 1")
        return spec


@dataclass(frozen=True)
class PipelineConfig:
    support: Grid = field(default_factory=lambda: Grid(-20.0, 40.0, 0.1))
    transform: str = "clr"
    basis_kind: str = "fourier"
    basis_size: int = 31
    includes_constant: Optional[bool] = None
    eps: float = 1e-3
    kappa: int = 1
    k_rule: KRule = field(default_factory=KRule.scaled)
    bandwidth: object = "silverman"
    quantile_source: str = "density"
    quantile_points: int = 601
    level: float = 0.95
    both_kappas: bool = False
    demand_path: Optional[Path] = None
    ma_window: int = 12
    ma_alignment: str = "trailing"
    temperature_path: Optional[Path] = None
    min_observations: int = 24
    region_weights: dict = field(default_factory=dict)
    shocks: tuple = ()
    response_h: float = 15.0
    response_points: tuple = tuple(float(s) for s in range(-15, 36))
    simulation: dict = field(default_factory=dict)
    truth_path: Optional[Path] = None
    output: Path = Path("out")

    @property
    def constant_in_basis(self) -> bool:
        # CLR curves integrate to zero, so a constant direction carries nothing
        if self.includes_constant is not None:
            return self.includes_constant
        return self.transform != "clr"

    def predictor_grid(self) -> Grid:
        if self.transform == QUANTILE:
            return Grid.unit(self.quantile_points)
        return self.support

    def basis(self):
        return make_basis(self.basis_kind, self.basis_size, self.predictor_grid(), self.constant_in_basis)

    def with_overrides(self, **kw) -> "PipelineConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k, v in kw.items():
            if v is not None:
                d[k] = v
        cfg = PipelineConfig(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.transform not in KINDS:
            raise InvalidConfig(f"transform must be one of {KINDS}, got {self.transform!r}")
        if int(self.kappa) != self.kappa or self.kappa < 0:
            raise InvalidConfig(f"kappa must be a nonnegative integer, got {self.kappa}")
        if not self.eps > 0:
            raise InvalidConfig("eps must be positive")
        if not 0 < self.level < 1:
            raise InvalidConfig("level must lie in (0, 1)")
        if self.quantile_source not in ("density", "samples"):
            raise InvalidConfig("quantile_source must be 'density' or 'samples'")
        if self.ma_alignment not in ("trailing", "centered"):
            raise InvalidConfig("moving-average alignment must be 'trailing' or 'centered'")
        if self.ma_window < 2:
            raise InvalidConfig("moving-average window must be at least 2")
        if self.min_observations < 2:
            raise InvalidConfig("min_observations must be at least 2")
        if not self.response_h > 0:
            raise InvalidConfig("response bandwidth must be positive")
        if not (isinstance(self.bandwidth, str) and self.bandwidth == "silverman"):
            try:
                ok = float(self.bandwidth) > 0
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise InvalidConfig(f"bandwidth must be 'silverman' or a positive number, got {self.bandwidth!r}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "PipelineConfig":
        _check_keys(d, _TOP_KEYS, "config")
        kw = {}
        if "support" in d:
            s = d["support"]
            _check_keys(s, {"lower", "upper", "step"}, "support")
            kw["support"] = Grid(float(s["lower"]), float(s["upper"]), float(s["step"]))
        if "transform" in d:
            kw["transform"] = str(d["transform"]).lower()
        if "basis" in d:
            b = d["basis"]
            _check_keys(b, {"kind", "size", "includes_constant"}, "basis")
            kw.update(basis_kind=b.get("kind", "fourier"), basis_size=int(b.get("size", 31)))
            kw["includes_constant"] = b.get("includes_constant")
        for key in ("eps", "level"):
            if key in d:
                kw[key] = float(d[key])
        for key in ("kappa", "quantile_points"):
            if key in d:
                kw[key] = int(d[key])
        for key in ("bandwidth", "quantile_source"):
            if key in d:
                kw[key] = d[key]
        if "both_kappas" in d:
            kw["both_kappas"] = bool(d["both_kappas"])
        if "k_rule" in d:
            kw["k_rule"] = KRule.from_dict(d["k_rule"]) if isinstance(d["k_rule"], dict) else KRule.parse(d["k_rule"])
        if "demand" in d:
            s = d["demand"]
            _check_keys(s, {"path", "window", "alignment"}, "demand")
            kw["demand_path"] = base_dir / s["path"]
            kw["ma_window"] = int(s.get("window", 12))
            kw["ma_alignment"] = s.get("alignment", "trailing")
        if "temperature" in d:
            s = d["temperature"]
            _check_keys(s, {"path", "min_observations"}, "temperature")
            kw["temperature_path"] = base_dir / s["path"]
            kw["min_observations"] = int(s.get("min_observations", 24))
        if "regions" in d:
            kw["region_weights"] = _parse_weights(d["regions"])
        if "shocks" in d:
            kw["shocks"] = tuple(ShockSpec.from_dict(s) for s in d["shocks"])
        if "response" in d:
            s = d["response"]
            _check_keys(s, {"h", "points", "start", "stop", "step"}, "response")
            kw["response_h"] = float(s.get("h", 15.0))
            if "points" in s:
                kw["response_points"] = tuple(float(v) for v in s["points"])
            elif "start" in s:
                n = int(round((float(s["stop"]) - float(s["start"])) / float(s["step"]))) + 1
                kw["response_points"] = tuple(float(s["start"]) + i * float(s["step"]) for i in range(n))
        if "simulation" in d:
            kw["simulation"] = dict(d["simulation"])
        if "truth" in d:
            kw["truth_path"] = base_dir / d["truth"]
        if "output" in d:
            kw["output"] = base_dir / d["output"]
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(raw, path.parent)

    def describe(self) -> dict:
        """Settings that determine the payload, for reports."""
        return {
            "transform": self.transform,
            "basis": self.basis().to_dict(),
            "eps": self.eps,
            "kappa": self.kappa,
            "k_rule": self.k_rule.to_dict(),
            "bandwidth": self.bandwidth,
            "quantile_source": self.quantile_source,
            "level": self.level,
            "moving_average": {"window": self.ma_window, "alignment": self.ma_alignment},
            "effective_days": "per-row column when present, otherwise calendar days",
            "min_observations": self.min_observations,
        }


def _parse_weights(d) -> dict:
    """``{"A": 0.6, "B": 0.4}`` or ``{"by_year": {"2001": {...}, ...}}``.

    Returns ``{year or None: {region: weight}}``; ``None`` applies to all years.
    """
    if not isinstance(d, dict):
        raise InvalidConfig("regions must be an object")
    if "by_year" in d:
        _check_keys(d, {"by_year"}, "regions")
        table = {}
        for year, w in d["by_year"].items():
            table[int(year)] = _weight_row(w)
        if not table:
            raise InvalidConfig("regions.by_year is empty")
        return table
    return {None: _weight_row(d)}


def _weight_row(w) -> dict:
    if not isinstance(w, dict) or not w:
        raise InvalidConfig("region weights must be a nonempty object")
    row = {str(k): float(v) for k, v in w.items()}
    if any(v < 0 for v in row.values()) or not sum(row.values()) > 0:
        raise InvalidConfig("region weights must be nonnegative with a positive sum")
    return row


def weights_for_year(table: dict, year: int) -> dict:
    """Weights in force for ``year``: the latest table entry at or before it."""
    if None in table:
        return table[None]
    years = sorted(y for y in table if y <= year)
    if not years:
        raise InvalidConfig(f"no region weights defined for {year} or earlier")
    return table[years[-1]]


# ---------------------------------------------------------------- demand


@dataclass(frozen=True, eq=False)
class DemandSeries:
    labels: tuple
    raw_gwh: np.ndarray
    effective_days: np.ndarray
    log_per_day: np.ndarray
    y: np.ndarray  # NaN where the moving average is undefined

    def defined(self) -> Dict[str, float]:
        return {lab: float(v) for lab, v in zip(self.labels, self.y) if np.isfinite(v)}


def _parse_month(text: str, line: int) -> tuple:
    try:
        dt = datetime.strptime(text.strip(), "%Y-%m")
    except ValueError:
        raise MalformedRow(f"bad year_month {text!r} (expected YYYY-MM)", line) from None
    return dt.year, dt.month


def _next_month(year: int, month: int) -> tuple:
    return (year + 1, 1) if month == 12 else (year, month + 1)


def _read_rows(path: Path, required: set):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedRow(f"{path.name} is empty", 1)
        missing = required - set(reader.fieldnames)
        if missing:
            raise MalformedRow(f"{path.name} lacks columns {sorted(missing)}", 1)
        for row in reader:
            yield reader.line_num, row


def _float(text, what, line):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise MalformedRow(f"bad {what} {text!r}", line) from None
    if not np.isfinite(v):
        raise MalformedRow(f"non-finite {what}", line)
    return v


def moving_average(values: np.ndarray, window: int = 12, alignment: str = "trailing") -> np.ndarray:
    """Moving average; NaN where the window does not fit.

    ``trailing`` averages months ``t-window+1 .. t``. ``centered`` is the
    2 x window filter (half weight on the two end months) for even windows and
    the plain centered mean for odd ones.
    """
    v = np.asarray(values, dtype=float)
    out = np.full(v.size, np.nan)
    if alignment == "trailing":
        if v.size >= window:
            c = np.convolve(v, np.ones(window) / window, mode="valid")
            out[window - 1 :] = c
        return out
    if window % 2 == 0:
        kernel = np.ones(window + 1)
        kernel[0] = kernel[-1] = 0.5
    else:
        kernel = np.ones(window)
    kernel /= window
    half = kernel.size // 2
    if v.size >= kernel.size:
        out[half : v.size - half] = np.convolve(v, kernel, mode="valid")
    return out


def load_demand(path, window: int = 12, alignment: str = "trailing") -> DemandSeries:
    path = Path(path)
    rows = []
    for line, row in _read_rows(path, {"year_month", "gwh"}):
        ym = _parse_month(row["year_month"], line)
        gwh = _float(row["gwh"], "gwh", line)
        if gwh <= 0:
            raise NonPositiveDemand(f"line {line}: demand must be positive, got {gwh}")
        days_text = (row.get("effective_days") or "").strip()
        if days_text:
            days = _float(days_text, "effective_days", line)
            if days <= 0:
                raise MalformedRow("effective_days must be positive", line)
        else:
            days = float(calendar.monthrange(*ym)[1])
        rows.append((ym, gwh, days, line))
    if not rows:
        raise MalformedRow(f"{path.name} has no data rows", 1)
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if cur[0] == prev[0]:
            raise MalformedRow(f"duplicate month {cur[0][0]:04d}-{cur[0][1]:02d}", cur[3])
        if cur[0] != _next_month(*prev[0]):
            raise MalformedRow(f"gap in demand series before {cur[0][0]:04d}-{cur[0][1]:02d}", cur[3])
    labels = tuple(f"{y:04d}-{m:02d}" for (y, m), *_ in rows)
    gwh = np.array([r[1] for r in rows])
    days = np.array([r[2] for r in rows])
    logv = np.log(gwh / days)
    y = logv - moving_average(logv, window, alignment)
    return DemandSeries(labels, gwh, days, logv, y)


# ---------------------------------------------------------------- temperature


def read_temperature(path) -> Dict[str, Dict[str, np.ndarray]]:
    """``{month: {region: samples}}`` with months in calendar order."""
    path = Path(path)
    acc: Dict[str, Dict[str, list]] = {}
    for line, row in _read_rows(path, {"timestamp", "region", "temp_c"}):
        ts = (row["timestamp"] or "").strip()
        try:
            dt = datetime.fromisoformat(ts)
        except ValueError:
            raise MalformedRow(f"bad timestamp {ts!r}", line) from None
        region = (row["region"] or "").strip()
        if not region:
            raise MalformedRow("empty region", line)
        temp = _float(row["temp_c"], "temp_c", line)
        acc.setdefault(f"{dt.year:04d}-{dt.month:02d}", {}).setdefault(region, []).append(temp)
    if not acc:
        raise MalformedRow(f"{path.name} has no data rows", 1)
    return {m: {r: np.array(v) for r, v in sorted(acc[m].items())} for m in sorted(acc)}


@dataclass(frozen=True, eq=False)
class MonthlyDensities:
    labels: tuple
    densities: List[DensityEstimate]
    samples: List[np.ndarray]  # pooled over regions, for sample quantiles
    bandwidths: List[dict]


def load_temperature(
    path,
    grid: Grid,
    region_weights: dict,
    bandwidth="silverman",
    min_observations: int = 24,
    threads: int = 1,
) -> MonthlyDensities:
    """Per-region monthly KDEs combined with the region weights in force that year."""
    if not region_weights:
        raise InvalidConfig("region weights are required")
    data = read_temperature(path)
    jobs = []
    plan = []
    for month, by_region in data.items():
        weights = weights_for_year(region_weights, int(month[:4]))
        for region in by_region:
            if region not in weights:
                raise UnknownRegion(f"region {region!r} in {month} has no weight")
        active = [r for r, w in weights.items() if w > 0]
        for region in active:
            samples = by_region.get(region)
            if samples is None:
                raise EmptyMonth(f"{month}: no observations for region {region!r}")
            if samples.size < min_observations:
                raise EmptyMonth(f"{month}: region {region!r} has {samples.size} observations, need {min_observations}")
            jobs.append(SampleBatch(month, samples, region))
        plan.append((month, active, [weights[r] for r in active]))

    def work(batch):
        return estimate_density(batch, grid, bandwidth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(work, jobs))
    else:
        estimates = [work(b) for b in jobs]

    by_key = {(b.label, b.region): d for b, d in zip(jobs, estimates)}
    labels, densities, pooled, bws = [], [], [], []
    for month, active, w in plan:
        parts = [by_key[(month, r)] for r in active]
        densities.append(weighted_average(parts, w))
        pooled.append(np.concatenate([data[month][r] for r in active]))
        bws.append({r: d.bandwidth for r, d in zip(active, parts)})
        labels.append(month)
    log.info("estimated %d monthly densities from %d regional batches", len(labels), len(jobs))
    return MonthlyDensities(tuple(labels), densities, pooled, bws)


# ---------------------------------------------------------------- predictors and fit


def build_predictors(cfg: PipelineConfig, months: MonthlyDensities) -> PredictorSeries:
    basis = cfg.basis()
    rows = []
    for d, samples in zip(months.densities, months.samples):
        if cfg.transform == QUANTILE and cfg.quantile_source == "samples":
            rows.append(quantile_from_samples(samples, basis.grid).f.values)
        elif cfg.transform == QUANTILE:
            rows.append(quantile_from_density(d, basis.grid).f.values)
        else:
            rows.append(transform(d, cfg.transform, cfg.eps).f.values)
    return PredictorSeries(project_many(np.array(rows), basis), basis, months.labels)


def align(demand: DemandSeries, x: PredictorSeries):
    """Months with both a response and a predictor; they must be contiguous."""
    y_by_month = demand.defined()
    keep = [i for i, lab in enumerate(x.labels) if lab in y_by_month]
    if len(keep) < 3:
        raise LengthMismatch("fewer than 3 months have both demand and temperature data")
    for a, b in zip(keep, keep[1:]):
        if b != a + 1 or _next_month(*map(int, x.labels[a].split("-"))) != tuple(map(int, x.labels[b].split("-"))):
            raise LengthMismatch(f"usable months are not contiguous between {x.labels[a]} and {x.labels[b]}")
    xs = x.subset(np.array(keep))
    y = np.array([y_by_month[lab] for lab in xs.labels])
    return y, xs


@dataclass(frozen=True, eq=False)
class Prepared:
    cfg: PipelineConfig
    demand: DemandSeries
    months: MonthlyDensities
    x_all: PredictorSeries
    y: np.ndarray
    x: PredictorSeries


def prepare(cfg: PipelineConfig, threads: int = 1) -> Prepared:
    if cfg.demand_path is None or cfg.temperature_path is None:
        raise InvalidConfig("config needs demand.path and temperature.path")
    demand = load_demand(cfg.demand_path, cfg.ma_window, cfg.ma_alignment)
    months = load_temperature(
        cfg.temperature_path, cfg.support, cfg.region_weights, cfg.bandwidth, cfg.min_observations, threads
    )
    x_all = build_predictors(cfg, months)
    y, x = align(demand, x_all)
    return Prepared(cfg, demand, months, x_all, y, x)


def fit_report(p: Prepared, m: FittedModel, kappa: int) -> dict:
    idx = np.arange(kappa, p.x.T)
    report = {
        "kappa": kappa,
        "T": m.T,
        "first_month": p.x.labels[kappa],
        "last_month": p.x.labels[-1],
        "K": m.K,
        "alpha": m.alpha,
        "eigvals_head": m.eigvals[:10].tolist(),
        "sigma_u_sq": m.sigma_u_sq,
        "rmse": rmse(m, p.y[idx], p.x.subset(idx)),
        "intercept": m.intercept,
    }
    truth = load_truth(p.cfg.truth_path, m, p.cfg.transform) if p.cfg.truth_path is not None else None
    if truth is not None:
        report["slope_error"] = float(np.linalg.norm(m.slope.coeffs - truth))
        report["slope_norm_truth"] = float(np.linalg.norm(truth))
    return report


def load_truth(path, m: FittedModel, kind: str) -> Optional[np.ndarray]:
    """Planted slope, or ``None`` when it was defined for another transform or basis."""
    d = json.loads(Path(path).read_text())
    if d.get("transform") != kind or d.get("basis") != m.basis.to_dict():
        log.info("truth file does not match the fitted transform and basis; skipping slope error")
        return None
    return np.asarray(d["slope"], dtype=float)


def run_fit(cfg: PipelineConfig, threads: int = 1, prepared: Optional[Prepared] = None) -> dict:
    """Fitted models keyed by output file name, plus the fit report."""
    p = prepared or prepare(cfg, threads)
    kappas = sorted({0, cfg.kappa}) if cfg.both_kappas else [cfg.kappa]
    files, reports = {}, []
    for k in kappas:
        m = fit_lagged(p.y, p.x, k, cfg.k_rule)
        files[f"model_kappa{k}.json"] = m.to_dict()
        reports.append(fit_report(p, m, k))
        log.info("kappa=%d: K=%d, sigma_u^2=%.4g", k, m.K, m.sigma_u_sq)
    files["fit_report.json"] = {"settings": cfg.describe(), "fits": reports}
    return files


def model_for(cfg: PipelineConfig, p: Prepared, model_path=None) -> FittedModel:
    if model_path is not None:
        m = FittedModel.from_json(Path(model_path).read_text())
        if m.basis is None or not m.basis.same_as(cfg.basis()):
            raise InvalidConfig("saved model basis does not match the config")
        return m
    return fit_lagged(p.y, p.x, cfg.kappa, cfg.k_rule)


def _period_density(p: Prepared, labels) -> DensityEstimate:
    index = {lab: i for i, lab in enumerate(p.months.labels)}
    missing = [lab for lab in labels if lab not in index]
    if missing:
        raise EmptyMonth(f"no temperature data for {missing}")
    parts = [p.months.densities[index[lab]] for lab in labels]
    return weighted_average(parts, np.ones(len(parts)))


def run_shock(cfg: PipelineConfig, threads: int = 1, model_path=None, prepared=None) -> dict:
    if not cfg.shocks:
        raise InvalidConfig("config defines no shocks")
    p = prepared or prepare(cfg, threads)
    m = model_for(cfg, p, model_path)
    rows = []
    for spec in cfg.shocks:
        norm = _period_density(p, spec.norm)
        extr = _period_density(p, spec.extr)
        path = fraction_shocks(observed_shock(norm, extr), spec.M)
        series = evaluate_shocks(m, transform_domain_shocks(path, norm, cfg.transform, m.basis, cfg.eps), cfg.level)
        for r in series.rows():
            rows.append({"shock": spec.name, **r})
    return {
        "shocks.csv": rows_to_csv(rows),
        "shocks.json": {"kappa": cfg.kappa, "transform": cfg.transform, "level": cfg.level, "rows": rows},
    }


def run_respond(cfg: PipelineConfig, threads: int = 1, model_path=None, prepared=None) -> dict:
    p = prepared or prepare(cfg, threads)
    m = model_for(cfg, p, model_path)
    grid = m.basis.grid
    points = [s for s in cfg.response_points if grid.lower <= s <= grid.upper]
    if not points:
        raise InvalidConfig("no response points inside the predictor support")
    curve = benchmark_response(m, points, cfg.response_h, cfg.level)
    return {
        "response.csv": curve.to_csv(),
        "response.json": {"kappa": cfg.kappa, "h": cfg.response_h, "level": cfg.level, "rows": curve.rows()},
    }


def run_density(cfg: PipelineConfig, threads: int = 1, prepared=None) -> dict:
    months = prepared.months if prepared else load_temperature(
        cfg.temperature_path, cfg.support, cfg.region_weights, cfg.bandwidth, cfg.min_observations, threads
    )
    s = cfg.support.points
    header = ["s", *months.labels]
    lines = [",".join(header)]
    values = np.array([d.values for d in months.densities])
    for i in range(s.size):
        lines.append(",".join([repr(float(s[i]))] + [repr(float(v)) for v in values[:, i]]))
    stats_rows = []
    for lab, d, bw in zip(months.labels, months.densities, months.bandwidths):
        st = density_stats(d)
        stats_rows.append(
            {"month": lab, "mean": st.mean, "variance": st.variance, "skewness": st.skewness, "kurtosis": st.kurtosis}
        )
    return {
        "densities.csv": "\n".join(lines) + "\n",
        "density_stats.csv": rows_to_csv(stats_rows),
        "bandwidths.json": dict(zip(months.labels, months.bandwidths)),
    }


_SIM_KEYS = {"dgp", "T_list", "reps", "coverage_reps", "level", "kappa", "workers"}


def run_simulate(cfg: PipelineConfig, seed: Optional[int] = None, workers: int = 1) -> dict:
    sim = dict(cfg.simulation)
    _check_keys(sim, _SIM_KEYS, "simulation")
    dgp = DGPConfig.from_dict(sim.get("dgp", {}))
    if seed is not None:
        dgp = dgp.replace(seed=int(seed))
    workers = int(sim.get("workers", workers))
    T_list = [int(t) for t in sim.get("T_list", [dgp.T])]
    bias = bias_experiment(dgp, T_list, int(sim.get("reps", 200)), rule=cfg.k_rule, workers=workers)
    cov = coverage_experiment(
        dgp,
        int(sim.get("coverage_reps", 500)),
        float(sim.get("level", cfg.level)),
        int(sim.get("kappa", 1)),
        rule=cfg.k_rule,
        workers=workers,
    )
    return {
        "simulate_bias.csv": rows_to_csv(bias),
        "simulate_summary.json": {"dgp": dgp.to_dict(), "bias": bias, "coverage": cov.to_dict()},
    }


# ---------------------------------------------------------------- output


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir: Path, files: dict):
    """Serialize everything first, then move files into place."""
    rendered = {name: (body if isinstance(body, str) else dumps(body)) for name, body in files.items()}
    for name, text in rendered.items():
        write_atomic(Path(out_dir) / name, text)
    return sorted(rendered)


def metadata(command: str, config_path=None, extra: Optional[dict] = None) -> dict:
    d = {
        "command": command,
        "config": None if config_path is None else str(config_path),
        "created": datetime.now().astimezone().isoformat(timespec="seconds"),
        "distreg": __version__,
        **simulation_metadata(),
    }
    if extra:
        d.update(extra)
    return d


__all__ = [
    "DemandSeries",
    "MonthlyDensities",
    "PipelineConfig",
    "ShockSpec",
    "ValidationError",
    "align",
    "build_predictors",
    "load_demand",
    "load_temperature",
    "moving_average",
    "prepare",
    "read_temperature",
    "run_density",
    "run_fit",
    "run_respond",
    "run_shock",
    "run_simulate",
    "write_outputs",
]
