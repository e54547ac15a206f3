"""Custom exceptions for the drmfpca package."""

from typing import Any, Dict, Optional


class DRMError(Exception):
    """Base exception for all drmfpca errors.

    This is the base class for all exceptions raised by the package. All other
    custom exceptions inherit from this class. The command line maps each class
    to a process exit code through ``exit_code``.
    """

    exit_code = 3

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        """Initialize the exception.

        Args:
            message: Error message describing what went wrong
            details: Structured context (indices, iterates, per-candidate failures)
                kept for debugging
        """
        super().__init__(message)
        self.details = details or {}


class ValidationError(DRMError):
    """Raised when an argument or precondition is invalid.

    Covers bad keyword values, conflicting command line policies and any
    precondition the caller could have checked before calling.
    """

    exit_code = 1


class DataError(DRMError):
    """Raised when input data cannot be used.

    This is the parent of all data problems, including unreadable input files.
    """

    exit_code = 2


class ParseError(DataError):
    """Raised when a CSV cell cannot be parsed as a number."""


class DegenerateSampleError(DataError):
    """Raised when a sample is too small or has zero spread."""


class DomainError(DataError):
    """Raised when a value lies outside the domain of an operation.

    Examples are gamma fitting with nonpositive observations, quantile levels
    outside (0, 1) and ``log x`` basis terms on nonpositive data.
    """


class NumericError(DRMError):
    """Raised when a numerical routine fails.

    This exception covers eigensolver and quadrature failures as well as
    objectives that overflow despite stabilization.
    """


class RankDeficiencyError(NumericError):
    """Raised when fewer eigenvalues than requested are numerically nonzero."""


class EvaluationError(NumericError):
    """Raised when a density cannot be evaluated at a pooled point.

    The usual remedy is to enable the KDE floor or widen the bandwidth.
    """


class ConvergenceError(NumericError):
    """Raised when the empirical likelihood fit does not converge.

    ``details`` holds the last iterate and its gradient sup-norm.
    """


class SelectionError(NumericError):
    """Raised when every candidate of a selection procedure failed."""


class EnvelopeError(NumericError):
    """Raised when a rejection sampler accepts less than 1% of proposals."""


class MassError(NumericError):
    """Raised when a reconstructed density integrates to less than 0.99."""


class BenchmarkError(DRMError):
    """Raised when a simulation benchmark cannot produce a report."""
