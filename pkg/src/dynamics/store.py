"""Embedding storage and bit-exact file I/O.

File format v1: magic "EMB1" (4 bytes), count as u64 LE, dim as u32 LE,
then ``count`` sample ids as u64 LE, then ``count * dim`` float32 LE values
in row-major order. The header is 16 bytes; an empty store is header-only.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVectorError, FormatError, IoError, TruncationError
from .validation import as_ids, as_rows

MAGIC = b"EMB1"
HEADER = struct.Struct("<4sQI")  # magic, count, dim


@dataclass(frozen=True)
class EmbeddingStore:
    """Fixed-dimension embedding rows keyed by unique ascending sample ids.

    Instances are immutable after construction and safe to share across
    threads. Normalization is an explicit step (:func:`normalize`), never a
    side effect of loading, so file round-trips stay bit-exact.
    """

    ids: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        # Views so freezing never flips writeability on a caller's array.
        rows = as_rows(self.rows).view()
        ids = as_ids(self.ids, count=rows.shape[0]).view()
        rows.flags.writeable = False
        ids.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", ids)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.rows.shape == other.rows.shape
            and np.array_equal(self.ids, other.ids)
            and self.rows.tobytes() == other.rows.tobytes()
        )


def load_embeddings(path) -> EmbeddingStore:
    """Read an EMB1 file, enforcing the header contract byte for byte."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read embeddings from {path}: {exc}") from exc

    if len(blob) < HEADER.size:
        if blob[: len(MAGIC)] != MAGIC[: len(blob)]:
            raise FormatError(f"{path}: bad magic, not an EMB1 file")
        raise TruncationError(f"{path}: file shorter than the 16-byte header")
    magic, count, dim = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if dim == 0:
        raise FormatError(f"{path}: header declares dim=0")

    expected = HEADER.size + count * 8 + count * dim * 4
    if len(blob) < expected:
        raise TruncationError(
            f"{path}: header declares {count} rows of dim {dim} "
            f"({expected} bytes) but file has {len(blob)}"
        )
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes after payload")

    ids = np.frombuffer(blob, dtype="<u8", count=count, offset=HEADER.size)
    rows = np.frombuffer(
        blob, dtype="<f4", count=count * dim, offset=HEADER.size + count * 8
    ).reshape(count, dim)
    return EmbeddingStore(ids=ids, rows=rows)


def save_embeddings(store: EmbeddingStore, path) -> None:
    """Write ``store`` so that :func:`load_embeddings` returns an equal store."""
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, store.count, store.dim))
            fh.write(np.ascontiguousarray(store.ids, dtype="<u8").tobytes())
            fh.write(np.ascontiguousarray(store.rows, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write embeddings to {path}: {exc}") from exc


def normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Project every row onto the unit sphere; ids are preserved.

    Raises DegenerateVectorError naming the first offending id if any row
    has zero norm. Norms are computed in float64 before casting back to the
    float32 storage dtype.
    """
    norms = np.linalg.norm(store.rows.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateVectorError(store.ids[zero[0]])
    rows = (store.rows.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingStore(ids=store.ids, rows=rows)
