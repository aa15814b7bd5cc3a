"""Error and warning types shared across the package.

Errors raised inside the estimation pipeline derive from ApportionError and
carry an optional ``stage`` label naming the pipeline step that failed.
"""

from __future__ import annotations


class ApportionError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        base = super().__str__()
        if self.stage:
            return f"[{self.stage}] {base}"
        return base


class DegenerateCloud(ApportionError):
    """Point cloud is affinely dependent below the requested dimension."""


class HullDimensionExceeded(ApportionError):
    """Exact hull computation requested above the supported dimension."""


class BudgetExceeded(ApportionError):
    """Exhaustive subset enumeration would exceed the configured budget."""


class AllDegenerate(ApportionError):
    """No K-subset of the candidates spans a non-degenerate simplex."""


class ZeroRow(ApportionError):
    """A data row sums to zero under the 'error' zero-row policy."""


class EmptyData(ApportionError):
    """No usable rows remain after filtering."""


class TooFewCandidates(ApportionError):
    """Fewer hull candidates than requested sources."""


class ZeroDenominator(ApportionError):
    """A pollutant column is unexplained by every source."""

    def __init__(self, column: int, stage: str | None = None):
        super().__init__(f"column {column} has zero attribution denominator", stage)
        self.column = column


class ShapeMismatch(ApportionError):
    """Matrix operands have incompatible shapes."""


class ZeroNormRow(ApportionError):
    """A reference row has zero Euclidean norm."""


class GenerationFailed(ApportionError):
    """Synthetic-data generation exhausted its retry budget."""


class ParseError(ApportionError):
    """CSV input could not be parsed; coordinates are 1-based."""

    def __init__(self, line: int, column: int, reason: str):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason


class NegativeValue(ParseError):
    """Negative entry in a concentration file."""

    def __init__(self, line: int, column: int):
        super().__init__(line, column, "negative value")


class NonFinite(ParseError):
    """NaN or infinite entry in a concentration file."""

    def __init__(self, line: int, column: int):
        super().__init__(line, column, "non-finite value")


class ApportionWarning(UserWarning):
    """Base class for package warnings."""


class RankDeficientWarning(ApportionWarning):
    """Augmented profile matrix is numerically rank deficient."""


class NotContainedWarning(ApportionWarning):
    """Sample points fall outside the reference polytope."""


class NegativeMeanWarning(ApportionWarning):
    """Estimated mean vector had negative entries clipped to zero."""


class DroppedRowsWarning(ApportionWarning):
    """Zero-concentration rows were dropped during normalization."""


class HullFallbackWarning(ApportionWarning):
    """Hull dimension above cap; all rows kept as vertex candidates."""
