"""Dataset ingestion, splitting, and the synthetic bimodal generator.

A dataset bundle holds row-aligned features for two modalities plus a
binary multi-label matrix. Rows are tagged query or retrieval (the two
are disjoint); training rows are a subset of the retrieval rows.

Feature files: magic "DSIBF", u32 rows, u32 cols, f32 row-major,
little-endian. Labels travel either as the same binary container
(values restricted to 0/1) or as a CSV of 0/1 integers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .losses import validate_labels
from .numkit import as_matrix

FEATURE_MAGIC = b"DSIBF"
_HEADER = struct.Struct("<II")
_LATENT_DIM = 16


@dataclass
class DatasetBundle:
    x1: np.ndarray  # [n, d1] float64
    x2: np.ndarray  # [n, d2] float64
    y: np.ndarray  # [n, d3] uint8
    query_mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    train_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.x1 = as_matrix(self.x1, "x1")
        self.x2 = as_matrix(self.x2, "x2")
        self.y = validate_labels(self.y)
        n = self.x1.shape[0]
        if self.x2.shape[0] != n or self.y.shape[0] != n:
            raise InvalidArgumentError(
                "modalities and labels must be row-aligned: "
                f"{self.x1.shape[0]}, {self.x2.shape[0]}, {self.y.shape[0]} rows"
            )
        if self.query_mask is None:
            self.query_mask = np.zeros(n, dtype=bool)
        if self.train_mask is None:
            self.train_mask = np.zeros(n, dtype=bool)
        self.query_mask = np.asarray(self.query_mask, dtype=bool)
        self.train_mask = np.asarray(self.train_mask, dtype=bool)
        if self.query_mask.shape != (n,) or self.train_mask.shape != (n,):
            raise InvalidArgumentError("split masks must have one entry per row")
        if np.any(self.query_mask & self.train_mask):
            raise InvalidArgumentError("training rows must lie in the retrieval set")

    @property
    def n(self) -> int:
        return self.x1.shape[0]

    @property
    def query_indices(self) -> np.ndarray:
        return np.flatnonzero(self.query_mask)

    @property
    def retrieval_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.query_mask)

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(self.train_mask)


@dataclass(frozen=True)
class SynthSpec:
    class_count: int
    samples_per_class: int
    d1: int
    d2: int
    label_dim: int | None = None  # defaults to class_count
    noise_sigma: float = 0.1
    multilabel_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.class_count, self.samples_per_class, self.d1, self.d2) < 1:
            raise InvalidArgumentError("all counts must be >= 1")
        ld = self.label_dim
        if ld is not None and ld < self.class_count:
            raise InvalidArgumentError("label_dim must be >= class_count")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise_sigma must be >= 0")
        if not 0.0 <= self.multilabel_rate <= 1.0:
            raise InvalidArgumentError("multilabel_rate must be in [0, 1]")


def generate_synthetic(spec: SynthSpec) -> DatasetBundle:
    """Draw one latent prototype per class and project it into each
    modality through a fixed random linear map, plus Gaussian noise.

    Labels are one-hot in the sample's class, with a second class added
    at the multilabel rate. Fully determined by `spec.seed`.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.class_count
    label_dim = spec.label_dim if spec.label_dim is not None else k
    n = k * spec.samples_per_class

    protos = rng.normal(size=(k, _LATENT_DIM))
    map1 = rng.normal(size=(_LATENT_DIM, spec.d1)) / np.sqrt(_LATENT_DIM)
    map2 = rng.normal(size=(_LATENT_DIM, spec.d2)) / np.sqrt(_LATENT_DIM)

    classes = np.repeat(np.arange(k), spec.samples_per_class)
    x1 = protos[classes] @ map1 + spec.noise_sigma * rng.normal(size=(n, spec.d1))
    x2 = protos[classes] @ map2 + spec.noise_sigma * rng.normal(size=(n, spec.d2))

    y = np.zeros((n, label_dim), dtype=np.uint8)
    y[np.arange(n), classes] = 1
    if spec.multilabel_rate > 0.0 and k > 1:
        extra = rng.random(n) < spec.multilabel_rate
        shift = rng.integers(1, k, size=n)
        second = (classes + shift) % k
        y[np.flatnonzero(extra), second[extra]] = 1
    return DatasetBundle(x1, x2, y)


def split(
    bundle: DatasetBundle, query_count: int, train_count: int, seed: int
) -> DatasetBundle:
    """Tag rows uniformly at random: query_count queries, the rest
    retrieval, and train_count training rows drawn from the retrieval set."""
    n = bundle.n
    if query_count < 0 or query_count + 1 > n:
        raise InvalidArgumentError(
            f"query_count {query_count} leaves no retrieval rows out of {n}"
        )
    if train_count < 0 or train_count > n - query_count:
        raise InvalidArgumentError(
            f"train_count {train_count} exceeds retrieval size {n - query_count}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    query_mask = np.zeros(n, dtype=bool)
    query_mask[perm[:query_count]] = True
    train_mask = np.zeros(n, dtype=bool)
    train_mask[perm[query_count : query_count + train_count]] = True
    return DatasetBundle(bundle.x1, bundle.x2, bundle.y, query_mask, train_mask)


def save_features(path, x: np.ndarray) -> None:
    x = as_matrix(x, "features")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(_HEADER.pack(*x.shape))
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def load_features(path) -> np.ndarray:
    """Read a feature file back as float64 (the file itself stores f32)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    rows, cols, offset = _read_header(path, buf)
    expected = offset + rows * cols * 4
    if len(buf) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes ({rows}x{cols} f32 after byte "
            f"{offset}), got {len(buf)}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=offset)
    return data.reshape(rows, cols).astype(np.float64)


def _read_header(path, buf: bytes) -> tuple[int, int, int]:
    if buf[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise FormatError(
            f"{path}: bad magic at byte 0, expected {FEATURE_MAGIC!r}"
        )
    offset = len(FEATURE_MAGIC)
    if len(buf) < offset + _HEADER.size:
        raise FormatError(f"{path}: truncated header, {len(buf)} bytes")
    rows, cols = _HEADER.unpack_from(buf, offset)
    return rows, cols, offset + _HEADER.size


def save_labels(path, y: np.ndarray) -> None:
    y = validate_labels(y)
    np.savetxt(path, y, fmt="%d", delimiter=",")


def load_labels(path) -> np.ndarray:
    """Load labels from CSV of 0/1 ints, or from a feature-format file
    whose values are all 0/1."""
    with open(path, "rb") as fh:
        head = fh.read(len(FEATURE_MAGIC))
    if head == FEATURE_MAGIC:
        return validate_labels(load_features(path))
    try:
        y = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: not a valid 0/1 CSV label file: {exc}") from exc
    return validate_labels(y)
