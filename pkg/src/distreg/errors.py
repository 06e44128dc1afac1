"""Exception hierarchy shared across the package.

Everything derives from :class:`DistregError`. The CLI maps
:class:`ValidationError` subclasses to exit code 2 and
:class:`NumericalError` subclasses to exit code 3.
"""


class DistregError(Exception):
    """Base class for all package errors."""

    code = "distreg_error"

    def to_dict(self):
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class ValidationError(DistregError, ValueError):
    code = "validation_error"


class NumericalError(DistregError, ArithmeticError):
    code = "numerical_error"


# grids and bases
class GridMismatch(ValidationError):
    code = "grid_mismatch"


class InvalidGrid(ValidationError):
    code = "invalid_grid"


class InvalidSize(ValidationError):
    code = "invalid_size"


class UnknownBasis(ValidationError):
    code = "unknown_basis"


class BasisMismatch(ValidationError):
    code = "basis_mismatch"


# density estimation
class DegenerateSample(NumericalError):
    code = "degenerate_sample"


class EmptyBatch(ValidationError):
    code = "empty_batch"


class BandwidthNonPositive(ValidationError):
    code = "bandwidth_non_positive"


class AllZeroWeights(ValidationError):
    code = "all_zero_weights"


class ZeroVariance(NumericalError):
    code = "zero_variance"


# transforms
class EmptySamples(ValidationError):
    code = "empty_samples"


# estimator
class LagTooLarge(ValidationError):
    code = "lag_too_large"


class LengthMismatch(ValidationError):
    code = "length_mismatch"


class AllZeroSpectrum(NumericalError):
    code = "all_zero_spectrum"


class DegenerateTheta(NumericalError):
    code = "degenerate_theta"


class RankDeficientWarning(UserWarning):
    """Requested cutoff exceeds the number of positive eigenvalues; it was capped."""


# shocks
class NegativePath(NumericalError):
    code = "negative_path"


class OutOfSupport(ValidationError):
    code = "out_of_support"


class EmptyInterval(ValidationError):
    code = "empty_interval"


# simulation and pipeline
class InvalidConfig(ValidationError):
    code = "invalid_config"


class MalformedRow(ValidationError):
    code = "malformed_row"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line

    def to_dict(self):
        d = super().to_dict()
        d["line"] = self.line
        return d


class NonPositiveDemand(ValidationError):
    code = "non_positive_demand"


class UnknownRegion(ValidationError):
    code = "unknown_region"


class EmptyMonth(ValidationError):
    code = "empty_month"
