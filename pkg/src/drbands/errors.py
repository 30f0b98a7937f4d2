"""Exception taxonomy shared across the estimation layers.

Validation problems (bad arguments, inconsistent configuration, malformed
input files) subclass ValueError so callers can catch them generically;
numerical degeneracies get their own branch so the CLI can map them to a
distinct exit code.
"""

__all__ = [
    "EstimationError",
    "InvalidArgumentError",
    "ConfigurationError",
    "DataValidationError",
    "DegenerateColumnError",
    "DegenerateDesignError",
    "DegenerateIdentificationError",
]


class EstimationError(Exception):
    """Base class for every failure raised by this package."""


class InvalidArgumentError(EstimationError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(EstimationError, ValueError):
    """A configuration object is internally inconsistent or unusable."""


class DataValidationError(InvalidArgumentError):
    """Input data failed validation; message carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateColumnError(EstimationError):
    """A design column is identically zero where a positive scale is needed."""


class DegenerateDesignError(EstimationError):
    """The design or response is too degenerate for the requested fit."""


class DegenerateIdentificationError(EstimationError):
    """The orthogonality Jacobian is numerically indistinguishable from zero."""
