"""Distributional shocks and the model's response to them.

Observed shocks are differences between an event-period density and a
reference density. Fractional shocks walk along the straight line between
the two; each point on the path is pushed through the predictor transform and
differenced against the transformed reference, giving a perturbation ``zeta_a``
in the space the model was fitted in. ``zeta_a`` points from the reference
towards the event, so responses grow with ``a``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .basis import Basis, CoefficientVector, FunctionOnGrid, Grid, project, trapezoid_weights
from .density import DensityEstimate
from .errors import (
    BandwidthNonPositive,
    EmptyInterval,
    GridMismatch,
    NegativePath,
    OutOfSupport,
)
from .estimator import FittedModel, InferenceResult, infer
from .transforms import DEFAULT_EPS, QUANTILE, default_quantile_grid, quantile_from_density, transform

DEFAULT_KERNEL_BANDWIDTH = 15.0
NEGATIVE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ObservedShock:
    z_norm: DensityEstimate
    z_extr: DensityEstimate
    delta: FunctionOnGrid

    def __post_init__(self):
        if self.z_norm.grid != self.z_extr.grid or self.delta.grid != self.z_norm.grid:
            raise GridMismatch("shock densities must share a grid")
        total = self.delta.integral()
        if abs(total) > 1e-6:
            raise ValueError(f"shock integrates to {total!r}, not 0")


@dataclass(frozen=True, eq=False)
class ShockSeries:
    """Perturbations ``zeta_a`` for increasing fractions ``a``."""

    fractions: np.ndarray
    zetas: List[CoefficientVector]
    transform: str
    functions: Optional[List[FunctionOnGrid]] = None
    results: Optional[List[InferenceResult]] = None

    def __post_init__(self):
        a = np.asarray(self.fractions, dtype=float)
        if a.ndim != 1 or a.size != len(self.zetas):
            raise ValueError("need one perturbation per fraction")
        if np.any(np.diff(a) <= 0):
            raise ValueError("fractions must be strictly increasing")
        object.__setattr__(self, "fractions", a)

    def with_results(self, results: Sequence[InferenceResult]) -> "ShockSeries":
        return ShockSeries(self.fractions, self.zetas, self.transform, self.functions, list(results))

    def rows(self) -> list:
        if self.results is None:
            raise ValueError("shock series has not been evaluated")
        return [
            {"a": float(a), "estimate": r.estimate, "std_error": r.std_error, "ci_low": r.ci_low, "ci_high": r.ci_high}
            for a, r in zip(self.fractions, self.results)
        ]

    def to_csv(self) -> str:
        return _rows_to_csv(self.rows(), ["a", "estimate", "std_error", "ci_low", "ci_high"])


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    """Benchmark response evaluated at a set of points ``s``."""

    points: np.ndarray
    bandwidth: float
    results: List[InferenceResult] = field(default_factory=list)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.results])

    def rows(self) -> list:
        return [
            {"s": float(s), "estimate": r.estimate, "std_error": r.std_error, "ci_low": r.ci_low, "ci_high": r.ci_high}
            for s, r in zip(self.points, self.results)
        ]

    def to_csv(self) -> str:
        return _rows_to_csv(self.rows(), ["s", "estimate", "std_error", "ci_low", "ci_high"])


def _rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(float(v)) for k, v in row.items()})
    return buf.getvalue()


def observed_shock(norm: DensityEstimate, extr: DensityEstimate) -> ObservedShock:
    if norm.grid != extr.grid:
        raise GridMismatch("reference and event densities live on different grids")
    return ObservedShock(norm, extr, extr.f - norm.f)


def fraction_values(M: int) -> np.ndarray:
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    return np.arange(1, int(M) + 1) / int(M)


def fraction_shocks(s: ObservedShock, M: int) -> List[DensityEstimate]:
    """Densities ``norm + a * delta`` for ``a = 1/M, ..., 1``.

    Tiny negative values (grid noise) are clipped and the result renormalized;
    anything below ``-1e-6`` raises :class:`NegativePath`.
    """
    grid = s.z_norm.grid
    out = []
    for a in fraction_values(M):
        v = s.z_norm.values + a * s.delta.values
        i = int(np.argmin(v))
        if v[i] < -NEGATIVE_TOL:
            raise NegativePath(f"path leaves the density simplex at a={a:g}, s={grid.points[i]:g} (value {v[i]:.3g})")
        out.append(DensityEstimate.normalized(grid, v))
    return out


def transform_domain_shocks(
    densities: Sequence[DensityEstimate],
    norm: DensityEstimate,
    kind: str,
    basis: Basis,
    eps: float = DEFAULT_EPS,
    fractions=None,
) -> ShockSeries:
    """``zeta_a = transform(Z_a) - transform(norm)`` in ``basis`` coordinates.

    Quantile predictors are evaluated on the basis grid, which must then be a
    grid of probability levels.
    """
    densities = list(densities)
    if fractions is None:
        fractions = fraction_values(len(densities))
    kind = kind.lower()

    def tf(d):
        if kind == QUANTILE:
            return quantile_from_density(d, basis.grid).f
        return transform(d, kind, eps).f

    base = tf(norm)
    funcs = [tf(d) - base for d in densities]
    zetas = [project(f, basis) for f in funcs]
    return ShockSeries(np.asarray(fractions, dtype=float), zetas, kind, funcs)


def evaluate_shocks(m: FittedModel, series: ShockSeries, level: float = 0.95) -> ShockSeries:
    return series.with_results([infer(m, z, level) for z in series.zetas])


def kernel_perturbation(s: float, h: float, grid: Grid) -> FunctionOnGrid:
    """Gaussian bump centred at ``s``, truncated to the support, with unit integral."""
    if not grid.lower <= s <= grid.upper:
        raise OutOfSupport(f"point {s} lies outside [{grid.lower}, {grid.upper}]")
    if not h > 0:
        raise BandwidthNonPositive(f"kernel bandwidth must be positive, got {h}")
    r = grid.points
    v = np.exp(-0.5 * ((r - s) / h) ** 2) / np.sqrt(2.0 * np.pi)
    return FunctionOnGrid(grid, v / (trapezoid_weights(grid) @ v))


def benchmark_response(
    m: FittedModel, s_grid, h: float = DEFAULT_KERNEL_BANDWIDTH, level: float = 0.95
) -> ResponseCurve:
    """Response to a unit-mass kernel bump at each ``s``: a local average of the slope function."""
    if m.basis is None:
        raise ValueError("benchmark response needs a model fitted in a grid basis")
    points = np.asarray(s_grid, dtype=float)
    results = [infer(m, project(kernel_perturbation(s, h, m.basis.grid), m.basis), level) for s in points]
    return ResponseCurve(points, float(h), results)


def quantile_step_shock(q_lo: float, q_hi: float, Q: float, sign: int = 1, grid: Optional[Grid] = None) -> FunctionOnGrid:
    """Step of height ``sign * Q / (q_hi - q_lo)`` on ``[q_lo, q_hi]``.

    Grid values are cell averages of the exact step (each point owns the
    half-step cell around it), so the trapezoid integral is exactly
    ``sign * Q`` even when the edges fall between grid points.
    """
    if not (0.0 <= q_lo < q_hi <= 1.0):
        raise EmptyInterval(f"need 0 <= q_lo < q_hi <= 1, got [{q_lo}, {q_hi}]")
    if not Q > 0:
        raise ValueError(f"total quantile change must be positive, got {Q}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    grid = grid or default_quantile_grid()
    p = grid.points
    half = 0.5 * grid.step
    left = np.maximum(p - half, grid.lower)
    right = np.minimum(p + half, grid.upper)
    covered = np.clip(np.minimum(right, q_hi) - np.maximum(left, q_lo), 0.0, None)
    height = sign * Q / (q_hi - q_lo)
    return FunctionOnGrid(grid, height * covered / (right - left))
