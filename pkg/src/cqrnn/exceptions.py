"""Exception types raised across the package.

Most derive from ``ValueError`` so that callers who only care about bad input
can catch a single built-in type.
"""


class CQRError(Exception):
    """Base class for all package errors."""


class ParameterError(CQRError, ValueError):
    """A distribution or overlay parameter is outside its valid range."""


class DomainError(CQRError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(CQRError, ValueError):
    """A dataset violates an invariant required by the operation."""


class SchemaError(DataError):
    """A CSV file is missing a required column."""


class ParseError(DataError):
    """A CSV cell could not be parsed as a number."""


class DataValidationError(DataError):
    """Parsed CSV content fails validation (bad indicator, no rows, ...)."""


class ConfigurationError(CQRError, ValueError):
    """Inconsistent training or evaluation configuration."""


class ShapeError(CQRError, ValueError):
    """Array shapes do not agree."""


class UsageError(CQRError, RuntimeError):
    """An API was called out of order, e.g. backward with a stale cache."""


class NumericError(CQRError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class TrainingError(NumericError):
    """Training diverged; ``step`` records the optimizer step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UndefinedMetricError(CQRError, ValueError):
    """A metric has no defined value for the given inputs."""
