"""Per-model document embeddings and the DQV1 on-disk format.

DQV1 layout, all integers little-endian:

    magic  4 bytes  b"DQV1"
    dim    u32
    count  u64
    then per record:
        id_len  u16
        id      id_len bytes, UTF-8
        vector  dim * f32

Self-describing and streamable; floats round-trip bit-exactly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import BadMagic, DimMismatch, DuplicateId, TruncatedFile

MAGIC = b"DQV1"
_HEADER = struct.Struct("<4sIQ")
_ID_LEN = struct.Struct("<H")


@dataclass
class EmbeddingMatrix:
    model_id: str
    dim: int
    doc_ids: list[str]
    vectors: np.ndarray  # float32, shape (len(doc_ids), dim)

    def validate(self) -> None:
        if self.dim <= 0:
            raise DimMismatch(f"dim must be positive, got {self.dim}")
        if self.vectors.ndim != 2 or self.vectors.shape != (len(self.doc_ids), self.dim):
            raise DimMismatch(
                f"vectors shape {self.vectors.shape} does not match "
                f"({len(self.doc_ids)}, {self.dim})"
            )
        if self.vectors.dtype != np.float32:
            raise DimMismatch(f"vectors must be float32, got {self.vectors.dtype}")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            seen: set[str] = set()
            for d in self.doc_ids:
                if d in seen:
                    raise DuplicateId(d)
                seen.add(d)
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise ValueError(f"embeddings for {self.model_id!r} contain non-finite components")

    def row_for(self, doc_id: str) -> np.ndarray:
        return self.vectors[self.doc_ids.index(doc_id)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (
            self.model_id == other.model_id
            and self.dim == other.dim
            and self.doc_ids == other.doc_ids
            and self.vectors.shape == other.vectors.shape
            and bool(np.array_equal(self.vectors, other.vectors))
        )


def write_embeddings(matrix: EmbeddingMatrix, sink: BinaryIO | str | os.PathLike) -> None:
    """Write a validated matrix in DQV1 layout."""
    matrix.validate()
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            _write(matrix, fh)
    else:
        _write(matrix, sink)


def _write(matrix: EmbeddingMatrix, fh: BinaryIO) -> None:
    fh.write(_HEADER.pack(MAGIC, matrix.dim, len(matrix.doc_ids)))
    vectors = np.ascontiguousarray(matrix.vectors, dtype="<f4")
    for i, doc_id in enumerate(matrix.doc_ids):
        raw_id = doc_id.encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise ValueError(f"doc id too long for format: {doc_id[:32]!r}...")
        fh.write(_ID_LEN.pack(len(raw_id)))
        fh.write(raw_id)
        fh.write(vectors[i].tobytes())


def read_embeddings(source: BinaryIO | str | os.PathLike, model_id: str | None = None) -> EmbeddingMatrix:
    """Read a DQV1 file.

    `model_id` defaults to the file stem when reading from a path (the format
    itself does not carry it), or "" for raw streams.
    """
    if isinstance(source, (str, os.PathLike)):
        if model_id is None:
            model_id = Path(source).stem
        with open(source, "rb") as fh:
            return _read(fh, model_id)
    return _read(source, model_id or "")


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFile(f"expected {n} bytes for {what}, got {len(data)}")
    return data


def _read(fh: BinaryIO, model_id: str) -> EmbeddingMatrix:
    header = fh.read(_HEADER.size)
    if len(header) < 4 or header[:4] != MAGIC:
        raise BadMagic(f"bad magic {header[:4]!r}")
    if len(header) != _HEADER.size:
        raise TruncatedFile("header truncated")
    _, dim, count = _HEADER.unpack(header)
    if dim == 0:
        raise DimMismatch("dim must be positive")
    doc_ids: list[str] = []
    rows = np.empty((count, dim), dtype="<f4")
    vec_bytes = dim * 4
    for i in range(count):
        (id_len,) = _ID_LEN.unpack(_read_exact(fh, _ID_LEN.size, f"id length of record {i}"))
        doc_ids.append(_read_exact(fh, id_len, f"id of record {i}").decode("utf-8"))
        rows[i] = np.frombuffer(_read_exact(fh, vec_bytes, f"vector of record {i}"), dtype="<f4")
    if fh.read(1):
        raise TruncatedFile("unexpected trailing bytes after last record")
    matrix = EmbeddingMatrix(model_id=model_id, dim=dim, doc_ids=doc_ids, vectors=rows.astype(np.float32))
    matrix.validate()
    return matrix
