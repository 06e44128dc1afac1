"""Maps from densities (or raw samples) into a linear function space.

CLR, log-hazard (LHR), log-reversed-hazard (LRHR) and quantile predictors.
The log transforms guard against log(0) with a small ``eps``: it is added to
the density in the numerator and used as a floor for the survival / CDF term
in the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import FunctionOnGrid, Grid
from .density import DensityEstimate, cdf
from .errors import EmptySamples

CLR = "clr"
LHR = "lhr"
LRHR = "lrhr"
QUANTILE = "quantile"
KINDS = (CLR, LHR, LRHR, QUANTILE)

DEFAULT_EPS = 1e-3
DEFAULT_QUANTILE_POINTS = 601


@dataclass(frozen=True, eq=False)
class Predictor:
    """A transformed distribution, tagged with how it was built."""

    kind: str
    f: FunctionOnGrid
    epsilon: float = 0.0
    source_label: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "source_label": self.source_label,
            "function": self.f.to_dict(),
        }

    def to_csv(self) -> str:
        return self.f.to_csv(header=("argument", "value"))


def default_quantile_grid() -> Grid:
    return Grid.unit(DEFAULT_QUANTILE_POINTS)


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def clr(d: DensityEstimate, eps: float = DEFAULT_EPS, label=None) -> Predictor:
    """Centered log-ratio: ``log(d + eps)`` minus its average over the support."""
    _check_eps(eps)
    g = FunctionOnGrid(d.grid, np.log(d.values + eps))
    centered = g - g.integral() / d.grid.length
    return Predictor(CLR, centered, float(eps), label)


def inverse_clr(p: Predictor) -> DensityEstimate:
    if p.kind != CLR:
        raise ValueError(f"inverse_clr needs a CLR predictor, got {p.kind!r}")
    v = p.f.values
    return DensityEstimate.normalized(p.f.grid, np.exp(v - v.max()))


def lhr(d: DensityEstimate, eps: float = DEFAULT_EPS, label=None) -> Predictor:
    """Log hazard rate ``log((d + eps) / max(eps, 1 - F))``."""
    _check_eps(eps)
    surv = np.maximum(eps, 1.0 - cdf(d).values)
    return Predictor(LHR, FunctionOnGrid(d.grid, np.log((d.values + eps) / surv)), float(eps), label)


def lrhr(d: DensityEstimate, eps: float = DEFAULT_EPS, label=None) -> Predictor:
    """Log reversed hazard rate ``log((d + eps) / max(eps, F))``."""
    _check_eps(eps)
    F = np.maximum(eps, cdf(d).values)
    return Predictor(LRHR, FunctionOnGrid(d.grid, np.log((d.values + eps) / F)), float(eps), label)


def quantile_from_samples(samples, r_grid: Optional[Grid] = None, label=None) -> Predictor:
    """Sample quantile function.

    At ``r`` with ``N r`` an integer the value is the ``N r``-th order statistic
    (1-based); in between, neighbouring order statistics are interpolated
    linearly. ``X(0)`` is the minimum and ``X(1)`` the maximum.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < 2:
        raise EmptySamples("quantile function needs at least two samples")
    r_grid = r_grid or default_quantile_grid()
    n = x.size
    pos = np.clip(n * r_grid.points, 1.0, float(n))
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n)
    frac = pos - lo
    vals = x[lo - 1] + frac * (x[hi - 1] - x[lo - 1])
    return Predictor(QUANTILE, FunctionOnGrid(r_grid, vals), 0.0, label)


def quantile_from_density(d: DensityEstimate, r_grid: Optional[Grid] = None, label=None) -> Predictor:
    """Generalized inverse ``inf{x : F(x) >= r}`` of the piecewise-linear CDF."""
    r_grid = r_grid or default_quantile_grid()
    F = cdf(d).values
    F = F / F[-1]  # remove rounding so F ends exactly at 1
    s = d.grid.points
    r = r_grid.points
    idx = np.clip(np.searchsorted(F, r, side="left"), 0, s.size - 1)
    vals = np.empty(r.size)
    first = idx == 0
    vals[first] = s[0]
    i = idx[~first]
    F0, F1 = F[i - 1], F[i]
    t = np.clip((r[~first] - F0) / (F1 - F0), 0.0, 1.0)
    vals[~first] = s[i - 1] + t * d.grid.step
    np.clip(vals, d.grid.lower, d.grid.upper, out=vals)
    return Predictor(QUANTILE, FunctionOnGrid(r_grid, vals), 0.0, label)


def transform(d: DensityEstimate, kind: str, eps: float = DEFAULT_EPS, r_grid=None, label=None) -> Predictor:
    """Dispatch on ``kind``; quantile predictors go through the density's CDF."""
    kind = kind.lower()
    if kind == CLR:
        return clr(d, eps, label)
    if kind == LHR:
        return lhr(d, eps, label)
    if kind == LRHR:
        return lrhr(d, eps, label)
    if kind == QUANTILE:
        return quantile_from_density(d, r_grid, label)
    raise ValueError(f"unknown transform {kind!r}; expected one of {KINDS}")
