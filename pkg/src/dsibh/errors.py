"""Exception types shared across the package.

The service layer and the CLI classify every failure into one of three
kinds: "usage" (caller passed something invalid), "io" (file missing,
malformed, or incompatible), and "numeric" (computation produced
non-finite values or diverged).
"""


class DSIBHError(Exception):
    """Base class for all package errors."""

    kind = "usage"


class InvalidArgumentError(DSIBHError, ValueError):
    """Bad shapes, out-of-range parameters, mismatched dimensions."""

    kind = "usage"


class DomainError(DSIBHError, ValueError):
    """Input outside the mathematical domain of an operation."""

    kind = "usage"


class UnsupportedOrderError(DSIBHError):
    """Analytic gradients are only implemented for entropy order 2."""

    kind = "usage"


class UndefinedMetricError(DSIBHError):
    """Metric has no defined value, e.g. MAP with zero relevant items."""

    kind = "usage"


class FormatError(DSIBHError):
    """Malformed or truncated file, or incompatible file pair."""

    kind = "io"


class NumericError(DSIBHError):
    """Non-finite intermediate value or diverged optimization."""

    kind = "numeric"
