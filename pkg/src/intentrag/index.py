"""Exact-cosine vector index with a versioned binary on-disk format.

The index is a brute-force scan over L2-normalized vectors: at desk scale it
stays sub-second and exactness makes every retrieval test an oracle test.

On-disk layout (all integers little-endian):

    header:    magic "IFIX" | version u32 | dim u32 | count u64 | metric u32
    per entry: id_len u32 | id bytes (utf-8) | dim * float32

Chunk metadata (doc id, ordinal per chunk) lives in a JSON sidecar at
``<path>.meta.json``.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Chunk
from .embedding import EmbeddingProvider, EmbeddingVector, embed_batch
from .errors import (
    DimensionMismatchError,
    IndexFormatError,
    UnsupportedVersionError,
    ValidationError,
)

MAGIC = b"IFIX"
FORMAT_VERSION = 1
METRIC_COSINE = 1

_HEADER = struct.Struct("<4sIIQI")
_ID_LEN = struct.Struct("<I")

_EMBED_BATCH_SIZE = 128


@dataclass(frozen=True)
class ChunkRef:
    doc_id: str
    ordinal: int


@dataclass(frozen=True)
class RankedList:
    """One query's retrieval output: (chunk_id, rank, score) with ranks 1..n."""

    query_ref: tuple[int, int]
    entries: tuple[tuple[str, int, float], ...]

    def chunk_ids(self) -> list[str]:
        return [entry[0] for entry in self.entries]

    def to_dict(self) -> dict:
        return {
            "query_ref": list(self.query_ref),
            "entries": [
                {"chunk_id": cid, "rank": rank, "score": score}
                for cid, rank, score in self.entries
            ],
        }


def validate_ranked_list(ranked: RankedList) -> None:
    """Raise ValidationError unless ranks are exactly 1..n, scores are
    non-increasing, and chunk ids are unique."""
    seen: set[str] = set()
    previous_score = None
    for position, (chunk_id, rank, score) in enumerate(ranked.entries, start=1):
        if rank != position:
            raise ValidationError(
                f"list {ranked.query_ref}: rank {rank} at position {position}")
        if chunk_id in seen:
            raise ValidationError(
                f"list {ranked.query_ref}: duplicate chunk id {chunk_id!r}")
        seen.add(chunk_id)
        if previous_score is not None and score > previous_score:
            raise ValidationError(
                f"list {ranked.query_ref}: score increases at rank {rank}")
        previous_score = score


class VectorIndex:
    """Immutable store of (chunk_id, vector) rows over a single dimension.

    Vectors are held as float32, the on-disk dtype, so a save/load round trip
    is bit-identical. Searches renormalize in float64, making scores true
    cosines regardless of float32 rounding.
    """

    def __init__(self, dim: int, ids: Sequence[str], matrix: np.ndarray,
                 metadata: dict[str, ChunkRef] | None = None,
                 build_warnings: Sequence[str] = ()) -> None:
        if len(set(ids)) != len(ids):
            raise ValidationError("index chunk ids must be unique")
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.shape != (len(ids), dim):
            raise ValidationError(
                f"matrix shape {matrix.shape} does not match {len(ids)} ids x dim {dim}")
        self.dim = dim
        self.ids = tuple(ids)
        self.matrix = matrix
        self.metadata = dict(metadata or {})
        self.build_warnings = tuple(build_warnings)
        self._ids_array = np.asarray(self.ids, dtype=object) if ids else np.empty(0, dtype=object)
        self._unit64: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def entries(self) -> Iterable[tuple[str, EmbeddingVector]]:
        for i, chunk_id in enumerate(self.ids):
            yield chunk_id, EmbeddingVector(np.asarray(self.matrix[i], dtype=np.float64))

    def _unit_matrix(self) -> np.ndarray:
        if self._unit64 is None:
            m = self.matrix.astype(np.float64)
            norms = np.linalg.norm(m, axis=1)
            if np.any(norms == 0.0):
                raise ValidationError("index contains an all-zero vector")
            self._unit64 = m / norms[:, None]
        return self._unit64

    def content_hash(self) -> str:
        return hashlib.sha256(dumps_index(self)).hexdigest()


def build_index(chunks: Sequence[Chunk], provider: EmbeddingProvider) -> VectorIndex:
    """Embed chunks and assemble an index; empty-bodied chunks are skipped
    with a recorded warning rather than failing the build."""
    if not chunks:
        raise ValidationError("cannot build an index from zero chunks")
    ids = [chunk.id for chunk in chunks]
    if len(set(ids)) != len(ids):
        dupes = sorted({cid for cid in ids if ids.count(cid) > 1})
        raise ValidationError(f"duplicate chunk ids: {dupes}")

    warnings: list[str] = []
    usable: list[Chunk] = []
    for chunk in chunks:
        if chunk.body.strip():
            usable.append(chunk)
        else:
            warnings.append(f"chunk {chunk.id!r} skipped: empty body")

    rows: list[np.ndarray] = []
    for start in range(0, len(usable), _EMBED_BATCH_SIZE):
        batch = usable[start:start + _EMBED_BATCH_SIZE]
        for vector in embed_batch(provider, [chunk.body for chunk in batch]):
            rows.append(vector.values)
    matrix = (np.vstack(rows).astype(np.float32)
              if rows else np.empty((0, provider.dim), dtype=np.float32))
    metadata = {chunk.id: ChunkRef(chunk.doc_id, chunk.ordinal) for chunk in usable}
    return VectorIndex(provider.dim, [chunk.id for chunk in usable], matrix,
                       metadata, warnings)


def search(index: VectorIndex, query_vec: EmbeddingVector, top_k: int,
           query_ref: tuple[int, int] = (0, 0)) -> RankedList:
    """Exact top-k by cosine similarity; ties broken by ascending chunk id."""
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")
    if query_vec.dim != index.dim:
        raise DimensionMismatchError(
            f"query dim {query_vec.dim} vs index dim {index.dim}")
    if len(index) == 0:
        return RankedList(query_ref=query_ref, entries=())
    q_norm = float(np.linalg.norm(query_vec.values))
    if q_norm == 0.0:
        raise ValidationError("cannot search with the zero vector")
    scores = index._unit_matrix() @ (query_vec.values / q_norm)
    # lexsort: primary key last, so order is by descending score then id.
    order = np.lexsort((index._ids_array, -scores))[:top_k]
    entries = tuple(
        (index.ids[i], rank, float(scores[i]))
        for rank, i in enumerate(order.tolist(), start=1)
    )
    return RankedList(query_ref=query_ref, entries=entries)


def dumps_index(index: VectorIndex) -> bytes:
    buffer = io.BytesIO()
    buffer.write(_HEADER.pack(MAGIC, FORMAT_VERSION, index.dim, len(index), METRIC_COSINE))
    for i, chunk_id in enumerate(index.ids):
        encoded = chunk_id.encode("utf-8")
        buffer.write(_ID_LEN.pack(len(encoded)))
        buffer.write(encoded)
        buffer.write(index.matrix[i].astype("<f4", copy=False).tobytes())
    return buffer.getvalue()


def save_index(index: VectorIndex, path: str | Path) -> None:
    path = Path(path)
    path.write_bytes(dumps_index(index))
    sidecar = {
        "chunks": {
            cid: {"doc_id": ref.doc_id, "ordinal": ref.ordinal}
            for cid, ref in index.metadata.items()
        }
    }
    Path(f"{path}.meta.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_exact(buffer: io.BytesIO, size: int, what: str) -> bytes:
    data = buffer.read(size)
    if len(data) != size:
        raise IndexFormatError(f"truncated index file while reading {what}")
    return data


def loads_index(data: bytes, metadata: dict[str, ChunkRef] | None = None) -> VectorIndex:
    buffer = io.BytesIO(data)
    header = _read_exact(buffer, _HEADER.size, "header")
    magic, version, dim, count, metric = _HEADER.unpack(header)
    if magic != MAGIC:
        raise IndexFormatError(f"bad magic bytes {magic!r}; not an index file")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"index format version {version} is not supported (expected {FORMAT_VERSION})")
    if metric != METRIC_COSINE:
        raise IndexFormatError(f"unknown metric tag {metric}")
    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    vector_bytes = dim * 4
    for i in range(count):
        (id_len,) = _ID_LEN.unpack(_read_exact(buffer, _ID_LEN.size, f"entry {i} id length"))
        ids.append(_read_exact(buffer, id_len, f"entry {i} id").decode("utf-8"))
        rows[i] = np.frombuffer(_read_exact(buffer, vector_bytes, f"entry {i} vector"),
                                dtype="<f4")
    if buffer.read(1):
        raise IndexFormatError("trailing bytes after the last entry")
    return VectorIndex(dim, ids, rows, metadata)


def load_index(path: str | Path) -> VectorIndex:
    path = Path(path)
    sidecar_path = Path(f"{path}.meta.json")
    metadata: dict[str, ChunkRef] = {}
    if sidecar_path.exists():
        try:
            sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
            metadata = {
                cid: ChunkRef(entry["doc_id"], int(entry["ordinal"]))
                for cid, entry in sidecar.get("chunks", {}).items()
            }
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IndexFormatError(f"corrupt metadata sidecar {sidecar_path}: {exc}") from exc
    return loads_index(path.read_bytes(), metadata)
