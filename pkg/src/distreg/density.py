"""Gaussian kernel density estimation on a fixed support, and density summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .basis import FunctionOnGrid, Grid, trapezoid_weights
from .errors import (
    AllZeroWeights,
    BandwidthNonPositive,
    DegenerateSample,
    EmptyBatch,
    GridMismatch,
    ZeroVariance,
)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Raw scalar observations for one period (and optionally one region)."""

    label: str
    samples: np.ndarray
    region: Optional[str] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if x.size == 0:
            raise EmptyBatch(f"batch {self.label!r} has no samples")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"batch {self.label!r} has non-finite samples")
        object.__setattr__(self, "samples", x)


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """Nonnegative function with unit trapezoid integral.

    ``bandwidth`` and ``n`` are set when the density came from a KDE and are
    ``None`` for densities built by other means (averages, shock paths).
    """

    f: FunctionOnGrid
    bandwidth: Optional[float] = None
    n: Optional[int] = None

    def __post_init__(self):
        v = self.f.values
        if np.min(v) < 0:
            raise ValueError(f"density has negative values (min {np.min(v):.3g})")
        total = self.f.integral()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"density integrates to {total!r}, not 1")

    @classmethod
    def normalized(cls, grid: Grid, values, bandwidth=None, n=None) -> "DensityEstimate":
        """Clip negatives to zero and rescale to unit integral."""
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = float(trapezoid_weights(grid) @ v)
        if not total > 0:
            raise DegenerateSample("cannot normalize a function with no mass on the grid")
        return cls(FunctionOnGrid(grid, v / total), bandwidth, n)

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @property
    def values(self) -> np.ndarray:
        return self.f.values

    def sidecar(self) -> dict:
        return {"bandwidth": self.bandwidth, "n": self.n}


@dataclass(frozen=True)
class DensityStats:
    mean: float
    variance: float
    skewness: float
    kurtosis: float


def silverman_bandwidth(samples) -> float:
    """Silverman's rule of thumb, ``0.9 * min(sd, IQR / 1.34) * n ** (-1/5)``.

    ``sd`` uses the n-1 denominator and the quartiles use linear interpolation
    between order statistics. When the IQR is zero but the spread is not (heavy
    ties), the standard deviation alone is used.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptyBatch("no samples")
    if x.size < 2:
        raise DegenerateSample("Silverman's rule needs at least two samples")
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        raise DegenerateSample("all samples are equal")
    q25, q75 = np.percentile(x, [25, 75])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde_values(samples: np.ndarray, points: np.ndarray, bandwidth: float, chunk: int = 4096):
    """Unnormalized Gaussian KDE ``(1/(n h)) sum phi((s - x_i)/h)`` at ``points``."""
    x = np.asarray(samples, dtype=float)
    out = np.zeros(points.size)
    for start in range(0, x.size, chunk):
        z = (points[:, None] - x[None, start : start + chunk]) / bandwidth
        out += np.exp(-0.5 * z * z).sum(axis=1)
    return out / (x.size * bandwidth * _SQRT_2PI)


def estimate_density(batch: SampleBatch, grid: Grid, bandwidth="silverman") -> DensityEstimate:
    """Gaussian KDE on ``grid``, renormalized so the mass on the support is 1."""
    if not isinstance(batch, SampleBatch):
        batch = SampleBatch("", batch)
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        h = silverman_bandwidth(batch.samples)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise BandwidthNonPositive(f"bandwidth must be positive, got {bandwidth}")
    raw = kde_values(batch.samples, grid.points, h)
    return DensityEstimate.normalized(grid, raw, bandwidth=h, n=int(batch.samples.size))


def weighted_average(densities: Sequence[DensityEstimate], weights) -> DensityEstimate:
    """Convex combination of densities on a common grid."""
    densities = list(densities)
    w = np.asarray(weights, dtype=float)
    if len(densities) == 0 or w.shape != (len(densities),):
        raise ValueError("need one weight per density")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not w.sum() > 0:
        raise AllZeroWeights("at least one weight must be positive")
    grid = densities[0].grid
    for d in densities[1:]:
        if d.grid != grid:
            raise GridMismatch("densities must share a grid")
    w = w / w.sum()
    mix = np.sum([wi * d.values for wi, d in zip(w, densities)], axis=0)
    return DensityEstimate.normalized(grid, mix)


def cdf(d: DensityEstimate) -> FunctionOnGrid:
    """Cumulative trapezoid integral from the support's lower end."""
    v = d.values
    increments = 0.5 * d.grid.step * (v[1:] + v[:-1])
    return FunctionOnGrid(d.grid, np.concatenate([[0.0], np.cumsum(increments)]))


def density_mean(d: DensityEstimate) -> float:
    w = trapezoid_weights(d.grid)
    return float(w @ (d.grid.points * d.values))


def density_stats(d: DensityEstimate) -> DensityStats:
    w = trapezoid_weights(d.grid) * d.values
    s = d.grid.points
    mean = float(w @ s)
    c = s - mean
    var = float(w @ c**2)
    if var < 1e-12:
        raise ZeroVariance("density is numerically a point mass")
    sd = np.sqrt(var)
    return DensityStats(
        mean=mean,
        variance=var,
        skewness=float(w @ c**3) / sd**3,
        kurtosis=float(w @ c**4) / var**2,
    )
