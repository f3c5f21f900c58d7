"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config 2, data 3, provider 4,
estimation 5.
"""

from __future__ import annotations


class RiskscopeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RiskscopeError):
    """Invalid or incomplete run configuration."""


class DataError(RiskscopeError):
    """Malformed, missing, or out-of-domain input data."""


class TranscriptParseError(DataError):
    """A transcript record failed validation.

    Carries the offending field name and, when parsing a corpus file,
    the 1-based line number of the record.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.field = field
        self.line = line


class MissingColumnError(DataError):
    def __init__(self, column: str, where: str = ""):
        suffix = f" in {where}" if where else ""
        super().__init__(f"missing column {column!r}{suffix}")
        self.column = column


class ProviderError(RiskscopeError):
    """Completion provider failure after retries were exhausted."""

    def __init__(self, message: str, status: int | None = None, chunk_index: int | None = None):
        super().__init__(message)
        self.status = status
        self.chunk_index = chunk_index


class EstimationError(RiskscopeError):
    """An estimator could not produce a result."""


class InsufficientDataError(EstimationError):
    pass


class DegenerateSeriesError(EstimationError):
    pass


class ConvergenceError(EstimationError):
    def __init__(self, message: str, last_delta: float):
        super().__init__(message)
        self.last_delta = last_delta


class InferenceError(EstimationError):
    pass


class DecompositionError(EstimationError):
    pass


class FormationError(EstimationError):
    pass
