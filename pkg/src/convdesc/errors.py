"""Exception and warning types shared across the package.

Exit-code mapping for the CLI: ValidationError and its subclasses mean a
bad input (exit 2); plain OSError means an I/O failure (exit 3).
"""


class ConvdescError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ConvdescError):
    """A file does not follow its declared on-disk format (bad magic, header)."""


class CorruptionError(FormatError):
    """Header and payload disagree (truncated or oversized data)."""


class ValidationError(ConvdescError):
    """An in-memory value violates a documented invariant."""


class ParameterError(ConvdescError):
    """An operation was called with arguments outside its domain."""


class ContractViolation(ConvdescError):
    """A caller broke an operation's precondition (e.g. dimension mismatch)."""


class DegenerateDataError(ConvdescError):
    """Input data carries no usable signal for the requested operation."""


class EmptyInputError(ParameterError):
    """A non-empty collection was required."""


class UndefinedQueryError(ParameterError):
    """A query has no positives, so its average precision is undefined."""


class DataWarning(UserWarning):
    """Non-fatal data issue (dropped keypoints, rank-deficient fits)."""
