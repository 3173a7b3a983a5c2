"""Exception types raised across the package.

``DataError`` subclasses signal bad input data (exit status 2 from the CLI);
``UsageError`` signals bad command-line usage (exit status 1).
"""

from __future__ import annotations


class McgipError(Exception):
    """Base class for all package errors."""


class DataError(McgipError, ValueError):
    """Input data violates a documented invariant."""


class UsageError(McgipError):
    """Invalid command-line usage or configuration key."""


class EmptyRecording(DataError):
    pass


class NoFixations(DataError):
    pass


class EmptySequence(DataError):
    pass


class NonPositiveDuration(DataError):
    pass


class DimensionUndefined(DataError):
    pass


class ZeroMassHeatmap(DataError):
    pass


class HeatmapTooSmall(DataError):
    pass


class MixedRepresentation(DataError):
    pass


class UnnormalizedEmbedding(DataError):
    pass


class EmptyPairSet(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class DivergenceDetected(McgipError, FloatingPointError):
    pass


class PairError(DataError):
    """A similarity scheme failed on one specific pair of items."""

    def __init__(self, i: int, j: int, cause: Exception):
        self.i, self.j, self.cause = i, j, cause
        super().__init__(f"pair ({i}, {j}): {type(cause).__name__}: {cause}")


class FormatError(DataError):
    """Malformed file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
