"""Reciprocal Rank Fusion over per-query ranked lists.

RRF score of a chunk: sum over the lists containing it of
``1 / (smoothing + rank)``. Chunks absent from a list contribute nothing for
that list. Fusion depends only on ranks, never on raw similarity scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ValidationError
from .index import RankedList, validate_ranked_list

DEFAULT_SMOOTHING = 60
DEFAULT_OUTPUT_DEPTH = 10


@dataclass(frozen=True)
class FusedRanking:
    """The aggregated ranking, sorted by RRF score descending.

    Ties are broken by contribution count (chunks backed by more lists first)
    and then by ascending chunk id, so the order is deterministic across
    platforms. ``provenance`` maps each chunk id to its (m, l, rank)
    contributions.
    """

    smoothing: int
    entries: tuple[tuple[str, float], ...]
    provenance: Mapping[str, tuple[tuple[int, int, int], ...]]

    def chunk_ids(self) -> list[str]:
        return [chunk_id for chunk_id, _ in self.entries]

    def to_dict(self) -> dict:
        return {
            "smoothing": self.smoothing,
            "entries": [
                {
                    "chunk_id": chunk_id,
                    "score": score,
                    "contributions": [
                        {"m": m, "l": l, "rank": rank}
                        for m, l, rank in self.provenance[chunk_id]
                    ],
                }
                for chunk_id, score in self.entries
            ],
        }


def rrf_fuse(lists: Sequence[RankedList], smoothing: int = DEFAULT_SMOOTHING) -> FusedRanking:
    """Fuse ranked lists into one ranking by summed reciprocal ranks."""
    if not lists:
        raise ValidationError("rrf_fuse needs at least one ranked list")
    if smoothing < 1:
        raise ValidationError("smoothing must be a positive integer")
    for position, ranked in enumerate(lists):
        try:
            validate_ranked_list(ranked)
        except ValidationError as exc:
            raise ValidationError(f"malformed ranked list at position {position}: {exc}") from exc

    scores: dict[str, float] = {}
    provenance: dict[str, list[tuple[int, int, int]]] = {}
    for ranked in lists:
        m, l = ranked.query_ref
        for chunk_id, rank, _score in ranked.entries:
            scores[chunk_id] = scores.get(chunk_id, 0.0) + 1.0 / (smoothing + rank)
            provenance.setdefault(chunk_id, []).append((m, l, rank))

    ordered = sorted(scores,
                     key=lambda cid: (-scores[cid], -len(provenance[cid]), cid))
    return FusedRanking(
        smoothing=smoothing,
        entries=tuple((cid, scores[cid]) for cid in ordered),
        provenance={cid: tuple(provenance[cid]) for cid in ordered},
    )


def truncate(fused: FusedRanking, depth: int) -> FusedRanking:
    """Keep the first ``depth`` entries, filtering provenance to match."""
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    kept = fused.entries[:depth]
    kept_ids = {chunk_id for chunk_id, _ in kept}
    return FusedRanking(
        smoothing=fused.smoothing,
        entries=kept,
        provenance={cid: contribs for cid, contribs in fused.provenance.items()
                    if cid in kept_ids},
    )
