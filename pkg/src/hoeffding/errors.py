"""Exception hierarchy shared by every module."""

from __future__ import annotations


class HoeffdingError(Exception):
    """Base class for all errors raised by this package."""


class InputError(HoeffdingError, ValueError):
    """Invalid argument: wrong shape, out-of-range value, too-short sequence."""


class ValidationError(InputError):
    """A matrix or law fails a structural check (e.g. a non-stochastic row)."""


class ConvergenceError(HoeffdingError, ArithmeticError):
    """An iterative computation stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class NumericalError(HoeffdingError, ArithmeticError):
    """A numerical routine produced an unusable result."""


class ConfigurationError(HoeffdingError):
    """Inconsistent detector configuration, e.g. no law valid at some time of day."""


class DegenerateReferenceError(HoeffdingError, ValueError):
    """Reference data has zero spread."""


class SchemaError(InputError):
    """A quantization schema refers to missing columns or invalid levels."""


class UnreliableQuantileWarning(UserWarning):
    """Too few Monte-Carlo samples to resolve the requested quantile."""


class DegenerateFeatureWarning(UserWarning):
    """A feature collapses to fewer bins than requested."""
