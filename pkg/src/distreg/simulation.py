"""Synthetic functional regressions with known truth.

Latent coefficients follow independent stationary AR(1) processes with
variances ``scale * j ** -rho``. The observed predictor adds serially
independent measurement error, and the response is generated from the latent
predictor, so the naive fit is attenuated while the lagged instrument is valid.

Random numbers come from numpy's PCG64 bit generator seeded with
``SeedSequence([seed, rep])``; draws are taken in a fixed order (initial
state, innovations, measurement error, regression noise) so a seed pins the
dataset exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .basis import Basis
from .errors import DegenerateTheta, InvalidConfig
from .estimator import KRule, PredictorSeries, apply, fit_lagged, infer, rmse

GENERATOR = "numpy.random.PCG64(SeedSequence([seed, rep]))"


@dataclass(frozen=True)
class DGPConfig:
    T: int = 1000
    n_basis: int = 3
    ar_coeff: float = 0.8
    spectrum_scale: float = 1.0
    spectrum_decay: float = 1.0
    error_scale: float = 0.3
    noise_sd: float = 0.5
    slope_truth: tuple = (1.0, 0.5, 0.25)
    intercept: float = 0.0
    seed: int = 0
    basis: Optional[Basis] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "slope_truth", tuple(float(v) for v in np.ravel(self.slope_truth)))
        if int(self.T) != self.T or self.T < 20:
            raise InvalidConfig(f"T must be an integer >= 20, got {self.T}")
        if int(self.n_basis) != self.n_basis or self.n_basis < 1:
            raise InvalidConfig(f"n_basis must be a positive integer, got {self.n_basis}")
        if not -1.0 < self.ar_coeff < 1.0:
            raise InvalidConfig(f"ar_coeff must lie in (-1, 1), got {self.ar_coeff}")
        if not self.spectrum_scale > 0 or not np.isfinite(self.spectrum_decay):
            raise InvalidConfig("predictor spectrum must be strictly positive")
        if self.error_scale < 0 or self.noise_sd < 0:
            raise InvalidConfig("error_scale and noise_sd must be nonnegative")
        if len(self.slope_truth) != self.n_basis:
            raise InvalidConfig(f"slope_truth has {len(self.slope_truth)} entries, need {self.n_basis}")
        if self.basis is not None and self.basis.size != self.n_basis:
            raise InvalidConfig("basis size must equal n_basis")

    @property
    def variances(self) -> np.ndarray:
        j = np.arange(1, self.n_basis + 1, dtype=float)
        return self.spectrum_scale * j ** (-self.spectrum_decay)

    def replace(self, **changes) -> "DGPConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return DGPConfig(**d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "basis"}
        d["slope_truth"] = list(self.slope_truth)
        d["basis"] = None if self.basis is None else self.basis.to_dict()
        d["generator"] = GENERATOR
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DGPConfig":
        d = dict(d)
        d.pop("generator", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown simulation keys: {sorted(unknown)}")
        if d.get("basis") is not None:
            d["basis"] = Basis.from_dict(d["basis"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    y: np.ndarray
    x_true: PredictorSeries
    x_observed: PredictorSeries
    slope_truth: np.ndarray
    intercept: float
    seed: int
    rep: int = 0

    def truth(self, zeta) -> float:
        return float(self.slope_truth @ np.asarray(zeta, dtype=float))


def make_rng(seed: int, rep: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(rep)])))


def generate(cfg: DGPConfig, rep: int = 0) -> SyntheticDataset:
    rng = make_rng(cfg.seed, rep)
    T, nb, ar = cfg.T, cfg.n_basis, cfg.ar_coeff
    var = cfg.variances
    shocks = np.empty((T, nb))
    shocks[0] = rng.standard_normal(nb) * np.sqrt(var)  # stationary start
    shocks[1:] = rng.standard_normal((T - 1, nb)) * np.sqrt(var * (1.0 - ar**2))
    xi = signal.lfilter([1.0], [1.0, -ar], shocks, axis=0)
    err = rng.standard_normal((T, nb)) * cfg.error_scale
    eps = rng.standard_normal(T) * cfg.noise_sd
    slope = np.asarray(cfg.slope_truth)
    y = cfg.intercept + xi @ slope + eps
    x_obs = xi + err if cfg.error_scale > 0 else xi
    return SyntheticDataset(
        y=y,
        x_true=PredictorSeries(xi, cfg.basis),
        x_observed=PredictorSeries(x_obs, cfg.basis),
        slope_truth=slope,
        intercept=cfg.intercept,
        seed=cfg.seed,
        rep=rep,
    )


def attenuation_bias(cfg: DGPConfig) -> float:
    """Large-sample bias of the naive fit in the one-coefficient model."""
    if cfg.n_basis != 1:
        raise InvalidConfig("closed-form attenuation needs n_basis = 1")
    sx2 = cfg.variances[0]
    se2 = cfg.error_scale**2
    return -cfg.slope_truth[0] * se2 / (sx2 + se2)


def _unit(zeta, n):
    if zeta is None:
        z = np.zeros(n)
        z[0] = 1.0
        return z
    z = np.asarray(zeta, dtype=float)
    if z.shape != (n,):
        raise InvalidConfig(f"test direction must have {n} entries")
    return z / np.linalg.norm(z)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    mean = math.fsum(v) / v.size
    sd = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1)) if v.size > 1 else float("nan")
    return mean, sd / math.sqrt(v.size)


def _bias_rep(args):
    cfg, rep, kappas, zeta, rule = args
    data = generate(cfg, rep)
    truth = data.truth(zeta)
    return [apply(fit_lagged(data.y, data.x_observed, k, rule, keep_instruments=False), zeta) - truth for k in kappas]


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def bias_experiment(
    cfg: DGPConfig,
    T_list: Sequence[int],
    reps: int,
    zeta=None,
    kappas=(0, 1),
    rule=None,
    workers: int = 1,
) -> list:
    """Monte Carlo mean of ``f_hat(zeta) - f(zeta)`` per sample size and lag.

    Returns one row per ``(T, kappa)`` with the mean bias and its Monte Carlo
    standard error. Replication ``r`` at every ``T`` uses seed ``(seed, r)``.
    """
    if reps < 100:
        raise InvalidConfig(f"bias experiment needs at least 100 replications, got {reps}")
    rule = KRule.parse(rule) if rule is not None else KRule.scaled()
    zeta = _unit(zeta, cfg.n_basis)
    rows = []
    for T in T_list:
        c = cfg.replace(T=int(T))
        draws = np.array(_map(_bias_rep, [(c, r, tuple(kappas), zeta, rule) for r in range(reps)], workers))
        for i, k in enumerate(kappas):
            mean, se = _mean_se(draws[:, i])
            rows.append({"T": int(T), "kappa": int(k), "bias": mean, "mc_se": se, "reps": int(reps)})
    return rows


@dataclass(frozen=True)
class CoverageResult:
    rate: float
    covered: int
    reps: int
    level: float
    kappa: int
    skipped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _coverage_rep(args):
    cfg, rep, kappa, zeta, level, rule = args
    data = generate(cfg, rep)
    m = fit_lagged(data.y, data.x_observed, kappa, rule)
    truth = data.truth(zeta)
    try:
        r = infer(m, zeta, level)
    except DegenerateTheta:
        return None
    # zero-width intervals from noiseless data still count as covering
    slack = 1e-9 * max(1.0, abs(truth))
    return bool(r.ci_low - slack <= truth <= r.ci_high + slack)


def coverage_experiment(
    cfg: DGPConfig, reps: int, level: float = 0.95, kappa: int = 1, zeta=None, rule=None, workers: int = 1
) -> CoverageResult:
    """Share of replications whose confidence interval contains the true response."""
    if reps < 500:
        raise InvalidConfig(f"coverage experiment needs at least 500 replications, got {reps}")
    rule = KRule.parse(rule) if rule is not None else KRule.scaled()
    zeta = _unit(zeta, cfg.n_basis)
    hits = _map(_coverage_rep, [(cfg, r, kappa, zeta, level, rule) for r in range(reps)], workers)
    valid = [h for h in hits if h is not None]
    covered = int(sum(valid))
    return CoverageResult(covered / len(valid) if valid else float("nan"), covered, len(valid), float(level), int(kappa), reps - len(valid))


def binomial_band(p: float, n: int, sigmas: float = 3.0):
    half = sigmas * math.sqrt(p * (1 - p) / n)
    return p - half, p + half


def rmse_experiment(cfg: DGPConfig, reps: int, kappas=(0, 1), rule=None) -> dict:
    """Mean in-sample RMSE per lag over ``reps`` replications."""
    rule = KRule.parse(rule) if rule is not None else KRule.scaled()
    out = {int(k): [] for k in kappas}
    for r in range(reps):
        data = generate(cfg, r)
        for k in kappas:
            m = fit_lagged(data.y, data.x_observed, k, rule, keep_instruments=False)
            idx = np.arange(k, cfg.T)
            out[int(k)].append(rmse(m, data.y[idx], data.x_observed.subset(idx)))
    return {k: math.fsum(v) / len(v) for k, v in out.items()}


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def metadata() -> dict:
    return {"generator": GENERATOR, "numpy": np.__version__}


def summary_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)
