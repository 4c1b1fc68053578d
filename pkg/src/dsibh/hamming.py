"""Bit-packed binary codes, Hamming search, and retrieval metrics.

Packing convention: bit k of the packed representation is set iff code
entry k equals +1, little-endian within 64-bit words, ceil(c/64) words
per item, padding bits above c zero. Hamming distance is then popcount
of XOR, which for +/-1 vectors equals (c - dot)/2.

Code DB file layout (all little-endian): magic "DSIBC", u16 version,
u32 code_bits, u32 count, u32 label_dim, then per item a u64 id,
ceil(c/64) u64 code words, and ceil(label_dim/8) bytes of label bits
(bit j of byte j//8 is label j).
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import nets
from .errors import FormatError, InvalidArgumentError, UndefinedMetricError

DB_MAGIC = b"DSIBC"
DB_VERSION = 1
_DB_HEADER = struct.Struct("<HIII")
_CHUNK = 256


def words_per_code(code_bits: int) -> int:
    if code_bits < 1:
        raise InvalidArgumentError("code_bits must be >= 1")
    return (code_bits + 63) // 64


def _word_mask(code_bits: int) -> np.ndarray:
    mask = np.full(words_per_code(code_bits), ~np.uint64(0), dtype=np.uint64)
    rem = code_bits % 64
    if rem:
        mask[-1] = np.uint64((1 << rem) - 1)
    return mask


def pack_codes(codes: np.ndarray) -> np.ndarray:
    """Pack one code per row into uint64 words; entries >= 0 become set
    bits, so relaxed outputs binarize with sign(0) = +1 on the way in."""
    codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    n, c = codes.shape
    if c < 1:
        raise InvalidArgumentError("codes need at least one bit")
    w = words_per_code(c)
    bits = np.zeros((n, w * 64), dtype=np.uint8)
    bits[:, :c] = codes >= 0.0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(n, w)


def unpack_codes(words: np.ndarray, code_bits: int) -> np.ndarray:
    """Inverse of pack_codes: rows of +/-1 float64."""
    words = np.ascontiguousarray(np.atleast_2d(words), dtype="<u8")
    w = words_per_code(code_bits)
    if words.shape[1] != w:
        raise InvalidArgumentError(
            f"expected {w} words per code for {code_bits} bits, got {words.shape[1]}"
        )
    as_bytes = words.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :code_bits]
    return bits.astype(np.float64) * 2.0 - 1.0


@dataclass(frozen=True)
class PackedCodeDB:
    code_bits: int
    words: np.ndarray  # [n, ceil(c/64)] uint64
    labels: np.ndarray  # [n, d3] uint8, d3 may be 0
    ids: np.ndarray  # [n] uint64

    def __post_init__(self):
        words = np.ascontiguousarray(np.atleast_2d(self.words), dtype="<u8")
        object.__setattr__(self, "words", words)
        n = words.shape[0]
        if words.shape[1] != words_per_code(self.code_bits):
            raise InvalidArgumentError(
                f"{words.shape[1]} words per item does not match "
                f"{self.code_bits} code bits"
            )
        if np.any(words & ~_word_mask(self.code_bits)):
            raise InvalidArgumentError(
                f"padding bits beyond bit {self.code_bits} must be zero"
            )
        labels = np.atleast_2d(np.asarray(self.labels, dtype=np.uint8))
        if labels.shape[1] == 0:
            labels = labels.reshape(n, 0)
        if not np.isin(labels, (0, 1)).all():
            raise InvalidArgumentError("labels must be binary 0/1")
        object.__setattr__(self, "labels", labels)
        ids = np.asarray(self.ids, dtype=np.uint64).reshape(-1)
        object.__setattr__(self, "ids", ids)
        if labels.shape[0] != n or ids.shape[0] != n:
            raise InvalidArgumentError(
                f"rows misaligned: {n} codes, {labels.shape[0]} labels, "
                f"{ids.shape[0]} ids"
            )

    @property
    def count(self) -> int:
        return self.words.shape[0]

    @property
    def label_dim(self) -> int:
        return self.labels.shape[1]


def build_db(codes: np.ndarray, labels=None, ids=None) -> PackedCodeDB:
    codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    n, c = codes.shape
    if labels is None:
        labels = np.zeros((n, 0), dtype=np.uint8)
    if ids is None:
        ids = np.arange(n, dtype=np.uint64)
    return PackedCodeDB(c, pack_codes(codes), labels, ids)


def encode(params: nets.MlpParams, x: np.ndarray, labels=None, ids=None) -> PackedCodeDB:
    """Binarize a network's relaxed outputs into a packed code DB."""
    return build_db(nets.forward(params, x), labels=labels, ids=ids)


def distance(a: np.ndarray, b: np.ndarray, code_bits: int) -> int:
    a = np.asarray(a, dtype=np.uint64).reshape(-1)
    b = np.asarray(b, dtype=np.uint64).reshape(-1)
    w = words_per_code(code_bits)
    if a.shape[0] != w or b.shape[0] != w:
        raise InvalidArgumentError(
            f"bit-length mismatch: {code_bits} bits needs {w} words, "
            f"got {a.shape[0]} and {b.shape[0]}"
        )
    mask = _word_mask(code_bits)
    return int(np.bitwise_count((a & mask) ^ (b & mask)).sum())


def distances(query_words: np.ndarray, db_words: np.ndarray, code_bits: int) -> np.ndarray:
    """Pairwise Hamming distances, [m, n] int64, chunked over queries."""
    q = np.ascontiguousarray(np.atleast_2d(query_words), dtype=np.uint64)
    d = np.ascontiguousarray(np.atleast_2d(db_words), dtype=np.uint64)
    w = words_per_code(code_bits)
    if q.shape[1] != w or d.shape[1] != w:
        raise InvalidArgumentError(
            f"bit-length mismatch: {code_bits} bits needs {w} words, "
            f"got {q.shape[1]} and {d.shape[1]}"
        )
    mask = _word_mask(code_bits)
    q = q & mask
    d = d & mask
    out = np.empty((q.shape[0], d.shape[0]), dtype=np.int64)
    for start in range(0, q.shape[0], _CHUNK):
        block = q[start : start + _CHUNK]
        xored = block[:, None, :] ^ d[None, :, :]
        out[start : start + block.shape[0]] = np.bitwise_count(xored).sum(
            axis=2, dtype=np.int64
        )
    return out


@dataclass(frozen=True)
class RankedResult:
    query_id: int
    ids: np.ndarray  # [r] uint64
    distances: np.ndarray  # [r] int64
    relevance: np.ndarray | None = None  # [r] bool when labels known


def retrieve(
    query: np.ndarray,
    db: PackedCodeDB,
    k: int | None = None,
    query_id: int = 0,
    query_label: np.ndarray | None = None,
) -> RankedResult:
    """Rank the whole DB by (distance, id) ascending, truncated to k."""
    if k is not None and k < 0:
        raise InvalidArgumentError("k must be >= 0")
    if db.count == 0:
        empty = np.empty(0, dtype=np.int64)
        return RankedResult(query_id, empty.astype(np.uint64), empty, None)
    dist = distances(query, db.words, db.code_bits)[0]
    order = np.lexsort((db.ids, dist))
    if k is not None:
        order = order[:k]
    relevance = None
    if query_label is not None and db.label_dim > 0:
        query_label = np.asarray(query_label, dtype=np.uint8).reshape(-1)
        if query_label.shape[0] != db.label_dim:
            raise InvalidArgumentError(
                f"query label has {query_label.shape[0]} entries, "
                f"db labels have {db.label_dim}"
            )
        shared = db.labels[order].astype(np.int64) @ query_label.astype(np.int64)
        relevance = shared > 0
    return RankedResult(query_id, db.ids[order], dist[order].astype(np.int64), relevance)


@dataclass(frozen=True)
class MapResult:
    map: float
    evaluated: int
    skipped: int


def average_precision(relevance: np.ndarray) -> float | None:
    """AP of one ranked relevance pattern: (1/r) sum_j P(j) rel(j) with
    r the relevant count in the pattern. None when r = 0."""
    rel = np.asarray(relevance, dtype=np.float64).reshape(-1)
    r = rel.sum()
    if r == 0:
        return None
    hits = np.cumsum(rel)
    ranks = np.arange(1, rel.shape[0] + 1, dtype=np.float64)
    return float((hits / ranks * rel).sum() / r)


def mean_average_precision(
    queries: PackedCodeDB,
    db: PackedCodeDB,
    radius: int | None = None,
    threads: int = 1,
) -> MapResult:
    """MAP over all queries with a top-`radius` ranking cutoff (the full
    DB when radius is omitted). Queries with no relevant item inside the
    cutoff are skipped and counted."""
    if queries.code_bits != db.code_bits:
        raise InvalidArgumentError(
            f"bit-length mismatch: queries {queries.code_bits}, db {db.code_bits}"
        )
    if queries.label_dim == 0 or db.label_dim == 0:
        raise InvalidArgumentError("MAP needs label matrices on both sides")
    if queries.label_dim != db.label_dim:
        raise InvalidArgumentError(
            f"label width mismatch: queries {queries.label_dim}, db {db.label_dim}"
        )
    if threads < 1:
        raise InvalidArgumentError("threads must be >= 1")
    cutoff = db.count if radius is None else radius
    if cutoff < 0:
        raise InvalidArgumentError("radius must be >= 0")
    cutoff = min(cutoff, db.count)

    db_labels = db.labels.astype(np.int64)

    def one_query(i: int) -> float | None:
        dist = distances(queries.words[i], db.words, db.code_bits)[0]
        order = np.lexsort((db.ids, dist))[:cutoff]
        shared = db_labels[order] @ queries.labels[i].astype(np.int64)
        return average_precision(shared > 0)

    if threads == 1:
        aps = [one_query(i) for i in range(queries.count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            aps = list(pool.map(one_query, range(queries.count)))

    kept = [a for a in aps if a is not None]
    skipped = len(aps) - len(kept)
    if not kept:
        raise UndefinedMetricError(
            f"all {len(aps)} queries have zero relevant items within the radius"
        )
    return MapResult(float(np.mean(kept)), len(kept), skipped)


def precision_at_k(queries: PackedCodeDB, db: PackedCodeDB, k: int, threads: int = 1) -> float:
    """Mean fraction of relevant items among each query's top k."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if queries.code_bits != db.code_bits:
        raise InvalidArgumentError(
            f"bit-length mismatch: queries {queries.code_bits}, db {db.code_bits}"
        )
    if queries.label_dim == 0 or db.label_dim == 0:
        raise InvalidArgumentError("precision@k needs label matrices on both sides")
    k = min(k, db.count)
    db_labels = db.labels.astype(np.int64)

    def one_query(i: int) -> float:
        dist = distances(queries.words[i], db.words, db.code_bits)[0]
        order = np.lexsort((db.ids, dist))[:k]
        shared = db_labels[order] @ queries.labels[i].astype(np.int64)
        return float((shared > 0).mean())

    if threads == 1:
        vals = [one_query(i) for i in range(queries.count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one_query, range(queries.count)))
    return float(np.mean(vals))


def save_db(path, db: PackedCodeDB) -> None:
    label_bytes = (db.label_dim + 7) // 8
    with open(path, "wb") as fh:
        fh.write(DB_MAGIC)
        fh.write(_DB_HEADER.pack(DB_VERSION, db.code_bits, db.count, db.label_dim))
        packed_labels = (
            np.packbits(db.labels, axis=1, bitorder="little")
            if label_bytes
            else np.zeros((db.count, 0), dtype=np.uint8)
        )
        item = np.zeros(db.count, dtype=_item_dtype(db.code_bits, db.label_dim))
        item["id"] = db.ids
        item["words"] = db.words
        if label_bytes:
            item["label"] = packed_labels
        fh.write(item.tobytes())


def load_db(path) -> PackedCodeDB:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[: len(DB_MAGIC)] != DB_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0, expected {DB_MAGIC!r}")
    offset = len(DB_MAGIC)
    if len(buf) < offset + _DB_HEADER.size:
        raise FormatError(f"{path}: truncated header, {len(buf)} bytes")
    version, code_bits, count, label_dim = _DB_HEADER.unpack_from(buf, offset)
    if version != DB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code_bits < 1:
        raise FormatError(f"{path}: code_bits must be >= 1, got {code_bits}")
    offset += _DB_HEADER.size
    dt = _item_dtype(code_bits, label_dim)
    expected = offset + count * dt.itemsize
    if len(buf) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes ({count} items of {dt.itemsize} "
            f"bytes after byte {offset}), got {len(buf)}"
        )
    item = np.frombuffer(buf, dtype=dt, count=count, offset=offset)
    words = np.ascontiguousarray(item["words"]).reshape(count, words_per_code(code_bits))
    if np.any(words & ~_word_mask(code_bits)):
        raise FormatError(f"{path}: nonzero padding bits beyond bit {code_bits}")
    if label_dim:
        labels = np.unpackbits(
            np.ascontiguousarray(item["label"]), axis=1, bitorder="little"
        )[:, :label_dim]
    else:
        labels = np.zeros((count, 0), dtype=np.uint8)
    return PackedCodeDB(code_bits, words, labels, item["id"].copy())


def _item_dtype(code_bits: int, label_dim: int) -> np.dtype:
    fields = [("id", "<u8"), ("words", "<u8", (words_per_code(code_bits),))]
    label_bytes = (label_dim + 7) // 8
    if label_bytes:
        fields.append(("label", "u1", (label_bytes,)))
    return np.dtype(fields)
