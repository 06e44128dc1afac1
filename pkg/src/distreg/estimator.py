"""Functional instrumental-variable estimator in basis coordinates.

Every predictor ``X_t`` and instrument ``Z_t`` is represented by its
coefficient vector in an orthonormal basis, so the cross-covariance operator
is an ``N_b x N_b`` matrix and all operator algebra is plain linear algebra.
The slope is the rank-``K`` regularized solution of

    C_Zy C_XZ = f C_XZ^* C_XZ,

restricted to the leading ``K`` eigenvectors of ``C_XZ^* C_XZ``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .basis import Basis, CoefficientVector, FunctionOnGrid, project, reconstruct
from .errors import (
    AllZeroSpectrum,
    BasisMismatch,
    DegenerateTheta,
    InvalidConfig,
    InvalidSize,
    LagTooLarge,
    LengthMismatch,
    RankDeficientWarning,
)

MODEL_FORMAT = "distreg.fitted_model"
MODEL_VERSION = 1

# eigenvalues below this fraction of the largest count as zero
POSITIVE_RTOL = 1e-12
# a perturbation whose projection on the retained eigenspace is this small
# (relative to its own norm) has no estimable variance
DEGENERATE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PredictorSeries:
    """Time-indexed basis coordinates, one row per period.

    ``basis`` may be ``None`` for purely coordinate-level work (simulations,
    scalar checks); otherwise every row is interpreted in that basis.
    """

    coeffs: np.ndarray
    basis: Optional[Basis] = None
    labels: Optional[tuple] = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2:
            raise ValueError("coefficients must be a (T, N_b) array")
        if c.shape[0] < 3:
            raise InvalidSize(f"a predictor series needs T >= 3, got {c.shape[0]}")
        if self.basis is not None and c.shape[1] != self.basis.size:
            raise BasisMismatch(f"expected {self.basis.size} coefficients per row, got {c.shape[1]}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != c.shape[0]:
                raise LengthMismatch("need one label per period")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_vectors(cls, vectors: Sequence[CoefficientVector], labels=None) -> "PredictorSeries":
        vectors = list(vectors)
        basis = vectors[0].basis
        for v in vectors[1:]:
            if (v.basis is None) != (basis is None) or (basis is not None and not basis.same_as(v.basis)):
                raise BasisMismatch("all vectors in a series must share a basis")
        return cls(np.stack([v.coeffs for v in vectors]), basis, labels)

    @property
    def T(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_basis(self) -> int:
        return self.coeffs.shape[1]

    @property
    def basis_id(self) -> Optional[str]:
        return None if self.basis is None else self.basis.id

    def vector(self, t: int) -> CoefficientVector:
        return CoefficientVector(self.basis, self.coeffs[t])

    def subset(self, index) -> "PredictorSeries":
        labels = None if self.labels is None else tuple(np.asarray(self.labels, dtype=object)[index])
        return PredictorSeries(self.coeffs[index], self.basis, labels)

    def scaled(self, c: float) -> "PredictorSeries":
        return PredictorSeries(self.coeffs * c, self.basis, self.labels)


@dataclass(frozen=True)
class KRule:
    """How the cutoff ``K`` is chosen.

    ``kind="scaled"``: normalize the spectrum to unit sum and keep
    ``1 + max{j : share_j >= scale * T**(-power)}`` directions.
    ``kind="fixed"``: keep ``k`` directions. Both are capped at the number of
    positive eigenvalues and at ``T - 1``.
    """

    kind: str = "scaled"
    k: Optional[int] = None
    scale: float = 0.01
    power: float = 0.2

    def __post_init__(self):
        if self.kind not in ("scaled", "fixed"):
            raise InvalidConfig(f"unknown K rule {self.kind!r}")
        if self.kind == "fixed" and (self.k is None or int(self.k) != self.k or self.k < 1):
            raise InvalidConfig(f"fixed K needs a positive integer, got {self.k!r}")
        if self.kind == "scaled" and not self.scale > 0:
            raise InvalidConfig("threshold scale must be positive")

    @classmethod
    def scaled(cls) -> "KRule":
        return cls("scaled", scale=0.01, power=0.2)

    @classmethod
    def alternative(cls) -> "KRule":
        return cls("scaled", scale=0.1, power=0.3)

    @classmethod
    def fixed(cls, k: int) -> "KRule":
        return cls("fixed", k=int(k))

    @classmethod
    def parse(cls, text) -> "KRule":
        """Accepts ``"scaled"``, ``"alternative"``, ``"fixed:3"`` or an int."""
        if isinstance(text, KRule):
            return text
        if isinstance(text, int):
            return cls.fixed(text)
        s = str(text).strip().lower()
        if s in ("scaled", "default", "auto"):
            return cls.scaled()
        if s in ("alternative", "alt"):
            return cls.alternative()
        if s.startswith("fixed:"):
            try:
                return cls.fixed(int(s.split(":", 1)[1]))
            except ValueError:
                pass
        raise InvalidConfig(f"cannot parse K rule {text!r}")

    def threshold(self, T: int) -> Optional[float]:
        if self.kind == "fixed":
            return None
        return self.scale * float(T) ** (-self.power)

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "k": self.k}
        return {"kind": "scaled", "scale": self.scale, "power": self.power}

    @classmethod
    def from_dict(cls, d: dict) -> "KRule":
        if d["kind"] == "fixed":
            return cls.fixed(d["k"])
        return cls("scaled", scale=d["scale"], power=d["power"])


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Everything needed to evaluate ``f_hat(zeta)`` and its standard error.

    ``eigvecs`` holds the eigenvectors as columns, ``c_xz`` maps predictor
    coordinates to instrument coordinates, and ``z_centered`` (optional) keeps
    the centered instruments for variance estimation after the fit.
    """

    K: int
    alpha: Optional[float]
    eigvals: np.ndarray
    eigvecs: np.ndarray
    slope: CoefficientVector
    intercept: float
    sigma_u_sq: float
    c_xz: np.ndarray
    x_mean: np.ndarray
    z_mean: np.ndarray
    y_mean: float
    T: int
    rule: KRule = field(default_factory=KRule.scaled)
    z_centered: Optional[np.ndarray] = None

    @property
    def basis(self) -> Optional[Basis]:
        return self.slope.basis

    @property
    def n_basis(self) -> int:
        return self.eigvecs.shape[0]

    def slope_function(self) -> FunctionOnGrid:
        """The Riesz representer of ``f_hat`` as a function on the basis grid."""
        return reconstruct(self.slope)

    def to_dict(self, include_instruments: bool = True) -> dict:
        d = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "basis": None if self.basis is None else self.basis.to_dict(),
            "T": self.T,
            "K": self.K,
            "alpha": self.alpha,
            "rule": self.rule.to_dict(),
            "eigvals": self.eigvals.tolist(),
            "eigvecs": self.eigvecs.tolist(),
            "slope": self.slope.coeffs.tolist(),
            "intercept": self.intercept,
            "sigma_u_sq": self.sigma_u_sq,
            "c_xz": self.c_xz.tolist(),
            "means": {"x": self.x_mean.tolist(), "z": self.z_mean.tolist(), "y": self.y_mean},
        }
        if include_instruments and self.z_centered is not None:
            d["z_centered"] = self.z_centered.tolist()
        return d

    def to_json(self, include_instruments: bool = True, indent=None) -> str:
        return json.dumps(self.to_dict(include_instruments), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        if d.get("format") != MODEL_FORMAT:
            raise InvalidConfig("not a fitted model document")
        if d.get("version") != MODEL_VERSION:
            raise InvalidConfig(f"unsupported model version {d.get('version')!r}")
        basis = None if d["basis"] is None else Basis.from_dict(d["basis"])
        z = d.get("z_centered")
        return cls(
            K=int(d["K"]),
            alpha=d["alpha"],
            eigvals=np.asarray(d["eigvals"], dtype=float),
            eigvecs=np.asarray(d["eigvecs"], dtype=float),
            slope=CoefficientVector(basis, d["slope"]),
            intercept=float(d["intercept"]),
            sigma_u_sq=float(d["sigma_u_sq"]),
            c_xz=np.asarray(d["c_xz"], dtype=float),
            x_mean=np.asarray(d["means"]["x"], dtype=float),
            z_mean=np.asarray(d["means"]["z"], dtype=float),
            y_mean=float(d["means"]["y"]),
            T=int(d["T"]),
            rule=KRule.from_dict(d["rule"]),
            z_centered=None if z is None else np.asarray(z, dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class InferenceResult:
    estimate: float
    theta_hat: float
    std_error: float
    ci_low: float
    ci_high: float
    level: float

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "theta_hat": self.theta_hat,
            "std_error": self.std_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
        }


def _check_pair(x: PredictorSeries, z: PredictorSeries):
    if x.T != z.T:
        raise LengthMismatch(f"series lengths differ: {x.T} vs {z.T}")
    if x.n_basis != z.n_basis:
        raise BasisMismatch(f"coefficient dimensions differ: {x.n_basis} vs {z.n_basis}")
    if x.basis is not None and z.basis is not None and not x.basis.same_as(z.basis):
        raise BasisMismatch(f"basis {x.basis_id} differs from {z.basis_id}")


def make_instruments(x: PredictorSeries, kappa: int):
    """Pair ``X_t`` with its own lag ``Z_t = X_{t-kappa}``.

    Returns ``(x_aligned, z, index)`` where ``index`` selects the periods of the
    original series (and of the response) that survive the alignment.
    ``kappa = 0`` uses ``X_t`` as its own instrument.
    """
    if int(kappa) != kappa or kappa < 0:
        raise ValueError(f"kappa must be a nonnegative integer, got {kappa}")
    kappa = int(kappa)
    if kappa >= x.T or x.T - kappa < 3:
        raise LagTooLarge(f"lag {kappa} leaves fewer than 3 periods out of {x.T}")
    index = np.arange(kappa, x.T)
    return x.subset(index), x.subset(index - kappa), index


def cross_covariance(x: PredictorSeries, z: PredictorSeries) -> np.ndarray:
    """``T^-1 sum (z_t - z_bar)(x_t - x_bar)^T``: maps predictor to instrument coordinates."""
    _check_pair(x, z)
    xc = x.coeffs - x.coeffs.mean(axis=0)
    zc = z.coeffs - z.coeffs.mean(axis=0)
    return zc.T @ xc / x.T


def eigendecompose(c_xz: np.ndarray):
    """Eigenpairs of ``C^T C`` with eigenvalues descending.

    Each eigenvector's largest-magnitude coordinate is made positive. Within a
    cluster of tied eigenvalues, vectors are ordered by the index of that
    coordinate.
    """
    c = np.asarray(c_xz, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("operator matrix must be finite")
    m = c.T @ c
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)[::-1]
    vecs = vecs[:, ::-1]

    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    vecs = vecs * np.where(signs == 0, 1.0, signs)

    tol = POSITIVE_RTOL * max(vals[0], np.finfo(float).tiny)
    order = []
    start = 0
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[start] - vals[i] > tol:
            block = list(range(start, i))
            order.extend(sorted(block, key=lambda j: lead[j]))
            start = i
    order = np.asarray(order)
    return vals[order], np.ascontiguousarray(vecs[:, order])


def positive_count(eigvals) -> int:
    v = np.asarray(eigvals, dtype=float)
    if v.size == 0 or not v[0] > 0:
        return 0
    return int(np.sum(v > POSITIVE_RTOL * v[0]))


def choose_K(eigvals, T: int, rule: KRule = None) -> int:
    """Number of eigen-directions kept by ``rule``.

    Emits :class:`RankDeficientWarning` when the request is capped below the
    full dimension, or when a fixed ``k`` is too large. The scaled rule's
    ``1 +`` overshoot on a full-rank spectrum is capped silently.
    """
    rule = KRule.parse(rule) if rule is not None else KRule.scaled()
    v = np.asarray(eigvals, dtype=float)
    if v.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.diff(v) > POSITIVE_RTOL * max(v[0], 0.0)):
        raise ValueError("eigenvalues must be sorted in descending order")
    n_pos = positive_count(v)
    if n_pos == 0:
        raise AllZeroSpectrum("cross-covariance operator has no positive eigenvalue")
    cap = min(n_pos, int(T) - 1)

    if rule.kind == "fixed":
        wanted = rule.k
    else:
        share = v / v.sum()
        above = np.nonzero(share >= rule.threshold(T))[0]
        wanted = 0 if above.size == 0 else 1 + (above[-1] + 1)

    if wanted > cap:
        if rule.kind == "fixed" or cap < v.size:
            warnings.warn(
                f"requested K={wanted} exceeds supported rank {cap}; capped",
                RankDeficientWarning,
                stacklevel=2,
            )
        wanted = cap
    return int(wanted)


def fit(y, x: PredictorSeries, z: PredictorSeries, rule=None, keep_instruments: bool = True) -> FittedModel:
    """Fit ``y_t = mu + f(X_t) + u_t`` using ``Z_t`` as instrument."""
    rule = KRule.parse(rule) if rule is not None else KRule.scaled()
    _check_pair(x, z)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != x.T:
        raise LengthMismatch(f"response has {y.size} values, predictors have {x.T}")
    if not np.all(np.isfinite(y)):
        raise ValueError("response must be finite")

    T = x.T
    x_mean = x.coeffs.mean(axis=0)
    z_mean = z.coeffs.mean(axis=0)
    y_mean = float(y.mean())
    xc = x.coeffs - x_mean
    zc = z.coeffs - z_mean
    yc = y - y_mean

    c_xz = zc.T @ xc / T
    scale = np.sqrt(np.mean(x.coeffs**2) * np.mean(z.coeffs**2)) * x.n_basis
    if not np.linalg.norm(c_xz, 2) > 1e-13 * scale:
        raise AllZeroSpectrum("predictor or instrument has no variation")
    eigvals, eigvecs = eigendecompose(c_xz)
    K = choose_K(eigvals, T, rule)
    if K == 0:
        raise AllZeroSpectrum("no eigenvalue passes the cutoff threshold")

    c_zy = zc.T @ yc / T
    g = eigvecs[:, :K]
    cg = c_xz @ g
    phi = g @ ((cg.T @ c_zy) / eigvals[:K])

    resid = yc - xc @ phi
    return FittedModel(
        K=K,
        alpha=rule.threshold(T),
        eigvals=eigvals,
        eigvecs=eigvecs,
        slope=CoefficientVector(x.basis, phi),
        intercept=float(y_mean - x_mean @ phi),
        sigma_u_sq=float(np.mean(resid**2)),
        c_xz=c_xz,
        x_mean=x_mean,
        z_mean=z_mean,
        y_mean=y_mean,
        T=T,
        rule=rule,
        z_centered=zc if keep_instruments else None,
    )


def fit_lagged(y, x: PredictorSeries, kappa: int, rule=None, keep_instruments: bool = True) -> FittedModel:
    """Fit with the ``kappa``-lagged predictor as instrument; ``y`` is aligned to ``x``."""
    xa, z, index = make_instruments(x, kappa)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != x.T:
        raise LengthMismatch(f"response has {y.size} values, predictors have {x.T}")
    return fit(y[index], xa, z, rule, keep_instruments)


def _coords(m: FittedModel, zeta) -> np.ndarray:
    if isinstance(zeta, FunctionOnGrid):
        if m.basis is None:
            raise BasisMismatch("model has no basis to project a function onto")
        return project(zeta, m.basis).coeffs
    if isinstance(zeta, CoefficientVector):
        if m.basis is not None and zeta.basis is not None and not m.basis.same_as(zeta.basis):
            raise BasisMismatch(f"perturbation basis {zeta.basis_id} differs from model basis {m.basis.id}")
        c = zeta.coeffs
    else:
        c = np.atleast_1d(np.asarray(zeta, dtype=float))
    if c.shape != (m.n_basis,):
        raise BasisMismatch(f"expected {m.n_basis} coefficients, got {c.shape}")
    return c


def apply(m: FittedModel, zeta) -> float:
    """``f_hat(zeta)``: the linear response to a perturbation, without intercept."""
    return float(m.slope.coeffs @ _coords(m, zeta))


def theta_hat(m: FittedModel, zeta) -> float:
    """Sample variance functional ``T^-1 sum_t (sum_j lambda_j^-2 <g_j, zeta> <C g_j, z_t>)^2``."""
    if m.z_centered is None:
        raise ValueError("model was fitted without keeping instruments")
    c = _coords(m, zeta)
    g = m.eigvecs[:, : m.K]
    proj = g.T @ c
    if not np.linalg.norm(proj) > DEGENERATE_RTOL * np.linalg.norm(c):
        raise DegenerateTheta("perturbation is orthogonal to the retained eigenspace")
    u = m.c_xz @ (g @ (proj / m.eigvals[: m.K]))
    w = m.z_centered @ u
    theta = float(np.mean(w**2))
    bound = float(np.mean(np.sum(m.z_centered**2, axis=1))) * float(u @ u)
    if not theta > 1e-14 * bound:
        raise DegenerateTheta("variance functional vanishes for this perturbation")
    return theta


def infer(m: FittedModel, zeta, level: float = 0.95) -> InferenceResult:
    """Point estimate with a two-sided normal-approximation confidence interval."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if not np.any(_coords(m, zeta)):
        # the null perturbation has a known zero response; report it exactly
        return InferenceResult(0.0, 0.0, 0.0, 0.0, 0.0, float(level))
    est = apply(m, zeta)
    theta = theta_hat(m, zeta)
    se = float(np.sqrt(m.sigma_u_sq * theta / m.T))
    q = float(stats.norm.ppf(0.5 + 0.5 * level))
    return InferenceResult(est, theta, se, est - q * se, est + q * se, float(level))


def predict(m: FittedModel, x: PredictorSeries) -> np.ndarray:
    return m.intercept + x.coeffs @ m.slope.coeffs


def rmse(m: FittedModel, y, x: PredictorSeries) -> float:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != x.T:
        raise LengthMismatch(f"response has {y.size} values, predictors have {x.T}")
    return float(np.sqrt(np.mean((y - predict(m, x)) ** 2)))
