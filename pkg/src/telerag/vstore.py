"""Exact top-k vector store.

A brute-force scan over float32 vectors: every query ranks all records by
cosine similarity, so results are exact and reproducible. The store file
records the embedding provider fingerprint and rejects queries embedded
by a different provider. File layout (all little-endian):

    magic "TRVS" | version u32 | dims u32 | count u64 |
    fingerprint (u32 length + UTF-8) |
    count records of: chunk_id (u32 length + UTF-8) + dims float32

Records are written sorted by chunk_id, so the same record set always
produces byte-identical files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import (
    DataError,
    DimensionMismatchError,
    DuplicateChunkError,
    StoreFormatError,
)

MAGIC = b"TRVS"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class VectorRecord:
    """One stored embedding, keyed by chunk id."""

    chunk_id: str
    embedding: np.ndarray


@dataclass(frozen=True)
class SearchHit:
    """A ranked search result; ranks are contiguous from 1."""

    chunk_id: str
    score: float
    rank: int


class VectorStore:
    """In-memory vector store with exact cosine top-k search."""

    def __init__(self, dims: int, provider_fingerprint: str) -> None:
        if dims < 1:
            raise ValueError("dims must be positive")
        self.dims = dims
        self.provider_fingerprint = provider_fingerprint
        self._ids: list[str] = []
        self._vectors: list[np.ndarray] = []
        self._index: dict[str, int] = {}
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    def insert(self, record: VectorRecord) -> None:
        """Add a record; duplicate ids and wrong dimensions are rejected."""
        vec = np.asarray(record.embedding, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != self.dims:
            raise DimensionMismatchError(
                f"vector has {vec.shape[-1] if vec.ndim else 0} dims, store expects {self.dims}"
            )
        if not np.isfinite(vec).all():
            raise DataError(f"embedding for {record.chunk_id!r} has non-finite components")
        if record.chunk_id in self._index:
            raise DuplicateChunkError(f"chunk id already in store: {record.chunk_id!r}")
        self._index[record.chunk_id] = len(self._ids)
        self._ids.append(record.chunk_id)
        self._vectors.append(vec)
        self._matrix = None
        self._norms = None

    def _ensure_matrix(self) -> None:
        if self._matrix is None:
            self._matrix = np.stack(self._vectors).astype(np.float64)
            self._norms = np.linalg.norm(self._matrix, axis=1)

    def search(self, query: Sequence[float] | np.ndarray, k: int) -> list[SearchHit]:
        """Exact top-k by cosine similarity; ties break on ascending chunk_id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != self.dims:
            raise DimensionMismatchError(
                f"query has {q.shape[-1] if q.ndim else 0} dims, store expects {self.dims}"
            )
        if not self._ids:
            return []
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise DataError("query vector has zero norm")
        self._ensure_matrix()
        assert self._matrix is not None and self._norms is not None
        sims = (self._matrix @ q) / (self._norms * qnorm)
        order = sorted(range(len(self._ids)), key=lambda i: (-sims[i], self._ids[i]))
        hits = []
        for rank, i in enumerate(order[:k], start=1):
            score = min(1.0, max(-1.0, float(sims[i])))
            hits.append(SearchHit(chunk_id=self._ids[i], score=score, rank=rank))
        return hits

    def save(self, path: str | Path) -> None:
        """Write the store to disk in canonical (chunk_id-sorted) order."""
        with open(path, "wb") as f:
            self._write(f)

    def _write(self, f: BinaryIO) -> None:
        fp_bytes = self.provider_fingerprint.encode("utf-8")
        f.write(MAGIC)
        f.write(struct.pack("<IIQ", FORMAT_VERSION, self.dims, len(self._ids)))
        f.write(struct.pack("<I", len(fp_bytes)))
        f.write(fp_bytes)
        for chunk_id in sorted(self._ids):
            id_bytes = chunk_id.encode("utf-8")
            f.write(struct.pack("<I", len(id_bytes)))
            f.write(id_bytes)
            f.write(self._vectors[self._index[chunk_id]].tobytes())

    @classmethod
    def read_header(cls, path: str | Path) -> tuple[int, int, int, str]:
        """(version, dims, count, fingerprint) without loading the records."""
        with open(path, "rb") as f:
            head = f.read(20)
            if len(head) < 20 or head[:4] != MAGIC:
                raise StoreFormatError(f"not a vector store file (bad magic): {path}")
            version, dims, count = struct.unpack("<IIQ", head[4:20])
            fp_len_raw = f.read(4)
            if len(fp_len_raw) < 4:
                raise StoreFormatError(f"truncated store file: {path}")
            (fp_len,) = struct.unpack("<I", fp_len_raw)
            fp_bytes = f.read(fp_len)
            if len(fp_bytes) < fp_len:
                raise StoreFormatError(f"truncated store file: {path}")
        return version, dims, count, fp_bytes.decode("utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        """Read a store file; wrong magic, version, or truncation raise StoreFormatError."""
        with open(path, "rb") as f:
            data = f.read()
        pos = 0

        def take(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(data):
                raise StoreFormatError(f"truncated store file: {path}")
            out = data[pos : pos + n]
            pos += n
            return out

        if take(4) != MAGIC:
            raise StoreFormatError(f"not a vector store file (bad magic): {path}")
        version, dims, count = struct.unpack("<IIQ", take(16))
        if version != FORMAT_VERSION:
            raise StoreFormatError(f"unsupported store format version {version}")
        (fp_len,) = struct.unpack("<I", take(4))
        fingerprint = take(fp_len).decode("utf-8")
        store = cls(dims=dims, provider_fingerprint=fingerprint)
        for _ in range(count):
            (id_len,) = struct.unpack("<I", take(4))
            chunk_id = take(id_len).decode("utf-8")
            vec = np.frombuffer(take(dims * 4), dtype="<f4").copy()
            store.insert(VectorRecord(chunk_id=chunk_id, embedding=vec))
        if pos != len(data):
            raise StoreFormatError(f"trailing bytes after {count} records: {path}")
        return store
