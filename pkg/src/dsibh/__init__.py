"""Cross-modal supervised hashing with an information-bottleneck
regularizer: label and modality encoders trained alternately, binary
codes packed for Hamming-distance retrieval."""

from .errors import (
    DSIBHError,
    DomainError,
    FormatError,
    InvalidArgumentError,
    NumericError,
    UndefinedMetricError,
    UnsupportedOrderError,
)

__version__ = "0.1.0"

__all__ = [
    "DSIBHError",
    "DomainError",
    "FormatError",
    "InvalidArgumentError",
    "NumericError",
    "UndefinedMetricError",
    "UnsupportedOrderError",
    "__version__",
]
