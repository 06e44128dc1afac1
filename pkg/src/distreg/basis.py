"""Uniform grids, functions sampled on them, and orthonormal bases.

All integrals use the composite trapezoid rule on the grid. Bases are
orthonormal with respect to that discrete inner product, so projection and
reconstruction are exact inverses on the span of a basis.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import BasisMismatch, GridMismatch, InvalidGrid, InvalidSize, UnknownBasis

FOURIER = "fourier"
LEGENDRE = "legendre"
BASIS_KINDS = (FOURIER, LEGENDRE)


@dataclass(frozen=True)
class Grid:
    """Closed interval ``[lower, upper]`` sampled every ``step``."""

    lower: float
    upper: float
    step: float
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lower, upper, step = float(self.lower), float(self.upper), float(self.step)
        if not (np.isfinite(lower) and np.isfinite(upper) and np.isfinite(step)):
            raise InvalidGrid("grid bounds and step must be finite")
        if step <= 0:
            raise InvalidGrid(f"step must be positive, got {step}")
        if upper <= lower:
            raise InvalidGrid(f"upper ({upper}) must exceed lower ({lower})")
        n_intervals = (upper - lower) / step
        n_round = round(n_intervals)
        if abs(n_intervals - n_round) > 1e-9 * max(1.0, n_intervals):
            raise InvalidGrid(
                f"(upper - lower) / step = {n_intervals} is not an integer; "
                "the grid must hit both endpoints"
            )
        if n_round + 1 < 4:
            raise InvalidGrid("a grid needs at least 4 points")
        pts = lower + np.arange(n_round + 1) * step
        pts.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "points", pts)

    @classmethod
    def unit(cls, n_points: int = 601) -> "Grid":
        """Grid on [0, 1] with ``n_points`` points (argument grid of quantile functions)."""
        return cls(0.0, 1.0, 1.0 / (n_points - 1))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "step": self.step}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(d["lower"], d["upper"], d["step"])


@lru_cache(maxsize=64)
def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.size, grid.step)
    w[0] = w[-1] = 0.5 * grid.step
    w.flags.writeable = False
    return w


def _check_same_grid(g1: Grid, g2: Grid):
    if g1 != g2:
        raise GridMismatch(f"grids differ: {g1} vs {g2}")


@dataclass(frozen=True, eq=False)
class FunctionOnGrid:
    """Real function sampled on a :class:`Grid`; values are read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise InvalidGrid(
                f"values have shape {v.shape}, grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "FunctionOnGrid":
        return cls(grid, fn(grid.points))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "FunctionOnGrid":
        return cls(grid, np.full(grid.size, float(c)))

    def integral(self) -> float:
        return float(trapezoid_weights(self.grid) @ self.values)

    def sup_distance(self, other: "FunctionOnGrid") -> float:
        _check_same_grid(self.grid, other.grid)
        return float(np.max(np.abs(self.values - other.values)))

    def _other_values(self, other):
        if isinstance(other, FunctionOnGrid):
            _check_same_grid(self.grid, other.grid)
            return other.values
        return float(other)

    def __add__(self, other):
        return FunctionOnGrid(self.grid, self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return FunctionOnGrid(self.grid, self.values - self._other_values(other))

    def __rsub__(self, other):
        return FunctionOnGrid(self.grid, self._other_values(other) - self.values)

    def __mul__(self, other):
        return FunctionOnGrid(self.grid, self.values * self._other_values(other))

    __rmul__ = __mul__

    def __neg__(self):
        return FunctionOnGrid(self.grid, -self.values)

    # serialization
    def to_dict(self) -> dict:
        return {**self.grid.to_dict(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionOnGrid":
        return cls(Grid.from_dict(d), d["values"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FunctionOnGrid":
        return cls.from_dict(json.loads(text))

    def to_csv(self, header: Sequence[str] = ("s", "value")) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for s, v in zip(self.grid.points, self.values):
            writer.writerow([repr(float(s)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FunctionOnGrid":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        s = data[:, 0]
        step = (s[-1] - s[0]) / (len(s) - 1)
        grid = Grid(s[0], s[-1], step)
        if not np.allclose(grid.points, s, rtol=1e-12, atol=1e-12 * max(1.0, abs(step))):
            raise InvalidGrid("CSV arguments do not form a uniform grid")
        return cls(grid, data[:, 1])


def inner_product(f: FunctionOnGrid, g: FunctionOnGrid) -> float:
    """Trapezoid approximation of the integral of ``f * g`` over the grid."""
    _check_same_grid(f.grid, g.grid)
    return float(trapezoid_weights(f.grid) @ (f.values * g.values))


def norm(f: FunctionOnGrid) -> float:
    return float(np.sqrt(inner_product(f, f)))


@dataclass(frozen=True, eq=False)
class Basis:
    """Orthonormal family evaluated on a grid.

    ``matrix`` has shape ``(size, grid.size)``; row ``j`` is the j-th element.
    """

    kind: str
    size: int
    grid: Grid
    includes_constant: bool
    matrix: np.ndarray = field(repr=False)

    @property
    def id(self) -> str:
        g = self.grid
        return (
            f"{self.kind}:{self.size}:{'c' if self.includes_constant else 'nc'}"
            f":[{g.lower!r},{g.upper!r}]/{g.step!r}"
        )

    @property
    def elements(self) -> list[FunctionOnGrid]:
        return [FunctionOnGrid(self.grid, row) for row in self.matrix]

    def gram(self) -> np.ndarray:
        w = trapezoid_weights(self.grid)
        return (self.matrix * w) @ self.matrix.T

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "size": self.size,
            "includes_constant": self.includes_constant,
            "grid": self.grid.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Basis":
        return make_basis(d["kind"], d["size"], Grid.from_dict(d["grid"]), d["includes_constant"])

    def same_as(self, other: "Basis") -> bool:
        return self is other or (isinstance(other, Basis) and self.id == other.id)


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    basis: Basis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if self.basis is not None and c.shape != (self.basis.size,):
            raise BasisMismatch(f"expected {self.basis.size} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def basis_id(self) -> str | None:
        return None if self.basis is None else self.basis.id

    def __add__(self, other: "CoefficientVector") -> "CoefficientVector":
        if not self.basis.same_as(other.basis):
            raise BasisMismatch("cannot add coefficients from different bases")
        return CoefficientVector(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "CoefficientVector") -> "CoefficientVector":
        if not self.basis.same_as(other.basis):
            raise BasisMismatch("cannot subtract coefficients from different bases")
        return CoefficientVector(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "CoefficientVector":
        return CoefficientVector(self.basis, self.coeffs * float(c))

    __rmul__ = __mul__


def legendre_values(n_max: int, u: np.ndarray) -> np.ndarray:
    """P_0..P_{n_max-1} at ``u`` in [-1, 1] via the three-term recurrence."""
    out = np.empty((n_max, u.size))
    out[0] = 1.0
    if n_max > 1:
        out[1] = u
    for n in range(2, n_max):
        out[n] = ((2 * n - 1) * u * out[n - 1] - (n - 1) * out[n - 2]) / n
    return out


def _orthonormalize(rows: np.ndarray, w: np.ndarray, passes: int = 2) -> np.ndarray:
    # modified Gram-Schmidt under <f, g> = sum(w f g); two passes for stability
    q = rows.copy()
    for i in range(q.shape[0]):
        for _ in range(passes):
            for j in range(i):
                q[i] -= (w @ (q[i] * q[j])) * q[j]
        nrm = np.sqrt(w @ (q[i] * q[i]))
        if nrm < 1e-12:
            raise InvalidSize(f"basis element {i} is numerically dependent on the grid")
        q[i] /= nrm
    return q


def _fourier_rows(size: int, grid: Grid, includes_constant: bool) -> np.ndarray:
    a, length = grid.lower, grid.length
    s = grid.points
    rows = []
    if includes_constant:
        rows.append(np.full(s.size, 1.0 / np.sqrt(length)))
    k = 1
    while len(rows) < size:
        arg = 2 * np.pi * k * (s - a) / length
        rows.append(np.sqrt(2.0 / length) * np.cos(arg))
        if len(rows) < size:
            rows.append(np.sqrt(2.0 / length) * np.sin(arg))
        k += 1
    # discrete orthogonality of the trapezoid rule needs k + l < number of intervals
    n_intervals = grid.size - 1
    if 2 * (k - 1) >= n_intervals:
        raise InvalidSize(
            f"{size} Fourier functions need frequencies up to {k - 1}, "
            f"too high for a grid with {n_intervals} intervals"
        )
    return np.array(rows)


def _legendre_rows(size: int, grid: Grid, includes_constant: bool) -> np.ndarray:
    a, length = grid.lower, grid.length
    u = 2.0 * (grid.points - a) / length - 1.0
    start = 0 if includes_constant else 1
    n_max = size + start
    if n_max > grid.size:
        raise InvalidSize(f"{size} Legendre polynomials exceed {grid.size} grid points")
    p = legendre_values(n_max, u)
    scale = np.sqrt((2 * np.arange(n_max) + 1) / length)[:, None]
    rows = scale * p
    w = trapezoid_weights(grid)
    if includes_constant:
        return _orthonormalize(rows, w)
    # orthogonalize against the constant too, then drop it
    return _orthonormalize(rows, w)[1:]


@lru_cache(maxsize=32)
def _make_basis_cached(kind: str, size: int, grid: Grid, includes_constant: bool) -> Basis:
    if kind == FOURIER:
        rows = _fourier_rows(size, grid, includes_constant)
    else:
        rows = _legendre_rows(size, grid, includes_constant)
    rows.flags.writeable = False
    return Basis(kind, size, grid, includes_constant, rows)


def make_basis(kind: str, size: int, grid: Grid, includes_constant: bool = True) -> Basis:
    """Orthonormal Fourier or shifted-Legendre basis on ``grid``.

    Fourier elements are ordered constant, cos 1, sin 1, cos 2, sin 2, ... so any
    prefix is itself a basis. Legendre elements come from the three-term
    recurrence and are re-orthonormalized against the trapezoid inner product.
    ``includes_constant=False`` drops the constant direction.
    """
    kind = str(kind).lower()
    if kind not in BASIS_KINDS:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
    if int(size) != size or size < 1:
        raise InvalidSize(f"basis size must be a positive integer, got {size}")
    return _make_basis_cached(kind, int(size), grid, bool(includes_constant))


def project(f: FunctionOnGrid, basis: Basis) -> CoefficientVector:
    """Coefficients ``<f, b_j>`` of ``f`` against each basis element."""
    _check_same_grid(f.grid, basis.grid)
    w = trapezoid_weights(basis.grid)
    return CoefficientVector(basis, basis.matrix @ (w * f.values))


def project_many(values: np.ndarray, basis: Basis) -> np.ndarray:
    """Row-wise projection of an ``(n, grid.size)`` array of function values."""
    w = trapezoid_weights(basis.grid)
    return np.asarray(values) @ (w[:, None] * basis.matrix.T)


def reconstruct(c: CoefficientVector) -> FunctionOnGrid:
    if c.basis is None:
        raise UnknownBasis("coefficient vector has no basis attached")
    return FunctionOnGrid(c.basis.grid, c.coeffs @ c.basis.matrix)


def check_same_basis(bases: Iterable[Basis]):
    bases = list(bases)
    for b in bases[1:]:
        if not b.same_as(bases[0]):
            raise BasisMismatch(f"basis {b.id} differs from {bases[0].id}")
