"""Evaluation metrics: vector entropy, unit/answer recall scores, EM, F1, R@K.

Conventions, since none of these are standardized end to end:

* Text normalization (EM, F1, and the deterministic matchers) is the usual
  open-domain QA recipe: lowercase, strip punctuation, drop articles
  (a/an/the), collapse whitespace.
* "Alignment" between a candidate text and a gold unit is decided by a
  matcher: ``normalized_exact`` (equality), ``containment`` (normalized gold
  is a substring of the normalized candidate), or ``llm_judge`` (binary
  verdict from a fixed prompt at temperature 0).
* Answer matching is a greedy injective assignment in candidate order, so one
  candidate cannot cover two gold answers and vice versa.
"""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import FactualUnit
from .errors import (
    DimensionMismatchError,
    UndefinedMetricError,
    ValidationError,
)
from .fusion import FusedRanking
from .embedding import EmbeddingVector
from . import prompts
from .llm import LlmProvider, LlmProviderConfig, create_llm

MATCHER_NORMALIZED_EXACT = "normalized_exact"
MATCHER_CONTAINMENT = "containment"
MATCHER_LLM_JUDGE = "llm_judge"

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_WS = re.compile(r"\s+")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True, eq=False)
class DistributionVector:
    """A probability distribution over embedding dimensions."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValidationError("distribution must be 1-D with length >= 2")
        if np.any(arr < 0):
            raise ValidationError("distribution has negative mass")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"distribution sums to {arr.sum()}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def entropy(self) -> float:
        positive = self.probs[self.probs > 0.0]
        # + 0.0 folds the degenerate -0.0 into plain 0.0
        return float(-np.sum(positive * np.log(positive)) + 0.0)


def mixture_distribution(vectors: Sequence[EmbeddingVector]) -> DistributionVector:
    """Average of the per-vector distributions |v_i| / sum_j |v_j|."""
    if not vectors:
        raise ValidationError("need at least one vector")
    dim = vectors[0].dim
    mix = np.zeros(dim, dtype=np.float64)
    for vector in vectors:
        if vector.dim != dim:
            raise DimensionMismatchError(f"mixed dims {vector.dim} and {dim}")
        magnitudes = np.abs(vector.values)
        total = float(magnitudes.sum())
        if total == 0.0:
            raise ValidationError("vector entropy is undefined for the zero vector")
        mix += magnitudes / total
    return DistributionVector(mix / len(vectors))


def vector_entropy(vectors: Sequence[EmbeddingVector]) -> float:
    """Shannon entropy (natural log) of the mixture distribution; 0 ln 0 = 0.

    Invariant under positive scaling of any vector and under permutation of
    the vector order; ranges over [0, ln(dim)].
    """
    return mixture_distribution(vectors).entropy()


class NormalizedExactMatcher:
    kind = MATCHER_NORMALIZED_EXACT

    def accepts(self, candidate: str, gold: str) -> bool:
        return normalize_answer(candidate) == normalize_answer(gold)


class ContainmentMatcher:
    kind = MATCHER_CONTAINMENT

    def accepts(self, candidate: str, gold: str) -> bool:
        gold_norm = normalize_answer(gold)
        return bool(gold_norm) and gold_norm in normalize_answer(candidate)


class LlmJudgeMatcher:
    """Binary alignment verdict from a fixed judge prompt at temperature 0."""

    kind = MATCHER_LLM_JUDGE

    def __init__(self, llm: LlmProvider) -> None:
        self.llm = llm

    def accepts(self, candidate: str, gold: str) -> bool:
        response = self.llm.complete(prompts.SYSTEM_PROMPT,
                                     prompts.render_judge(gold, candidate),
                                     temperature=0.0, max_tokens=8)
        return response.strip().lower().startswith("yes")


Matcher = NormalizedExactMatcher | ContainmentMatcher | LlmJudgeMatcher


@dataclass(frozen=True)
class MatcherConfig:
    kind: str = MATCHER_CONTAINMENT
    judge_llm: LlmProviderConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in (MATCHER_NORMALIZED_EXACT, MATCHER_CONTAINMENT,
                             MATCHER_LLM_JUDGE):
            raise ValidationError(f"unknown matcher kind {self.kind!r}")
        if self.kind == MATCHER_LLM_JUDGE and self.judge_llm is None:
            raise ValidationError("llm_judge matcher requires judge_llm config")


def create_matcher(config: MatcherConfig) -> Matcher:
    if config.kind == MATCHER_NORMALIZED_EXACT:
        return NormalizedExactMatcher()
    if config.kind == MATCHER_CONTAINMENT:
        return ContainmentMatcher()
    assert config.judge_llm is not None
    return LlmJudgeMatcher(create_llm(config.judge_llm))


@dataclass(frozen=True)
class MatchOutcome:
    matched_gold_ids: frozenset[str]
    verdicts: tuple[tuple[str, str | None], ...]


def _gold_id_text(gold: Sequence[FactualUnit | str]) -> list[tuple[str, str]]:
    pairs = []
    for i, entry in enumerate(gold):
        if isinstance(entry, FactualUnit):
            pairs.append((entry.id, entry.statement))
        else:
            pairs.append((f"g{i}", str(entry)))
    ids = [gid for gid, _ in pairs]
    if len(set(ids)) != len(ids):
        raise ValidationError("gold ids must be unique")
    return pairs


def match_units(candidates: Sequence[str], gold: Sequence[FactualUnit | str],
                matcher: Matcher) -> MatchOutcome:
    """Greedy injective assignment: in candidate order, each candidate takes
    the first still-unmatched gold entry the matcher accepts."""
    pairs = _gold_id_text(gold)
    matched: dict[str, str] = {}
    verdicts: list[tuple[str, str | None]] = []
    for candidate in candidates:
        assigned = None
        for gold_id, gold_text in pairs:
            if gold_id in matched:
                continue
            if matcher.accepts(candidate, gold_text):
                matched[gold_id] = candidate
                assigned = gold_id
                break
        verdicts.append((candidate, assigned))
    return MatchOutcome(matched_gold_ids=frozenset(matched),
                        verdicts=tuple(verdicts))


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    numerator: int | None = None
    denominator: int | None = None
    note: str | None = None


def information_recall_rate(retrieved_passages: Sequence[str],
                            gold_units: Sequence[FactualUnit | str],
                            matcher: Matcher) -> MetricValue:
    """Fraction of gold factual units covered by at least one passage.

    A unit counts once no matter how many passages cover it, and one passage
    may cover several units.
    """
    if not gold_units:
        raise UndefinedMetricError("IRR is undefined with no gold units")
    pairs = _gold_id_text(gold_units)
    covered = sum(
        1 for _gold_id, gold_text in pairs
        if any(matcher.accepts(passage, gold_text) for passage in retrieved_passages)
    )
    return MetricValue("IRR", covered / len(pairs), covered, len(pairs))


def answer_match(generated: Sequence[str], gold_answers: Sequence[str],
                 matcher: Matcher) -> MatchOutcome:
    return match_units(generated, list(gold_answers), matcher)


def answer_accuracy(generated: Sequence[str], gold_answers: Sequence[str],
                    matcher: Matcher) -> MetricValue:
    """|A*| / |A_gen|: precision of the generated answer set."""
    if not generated:
        return MetricValue("AA", 0.0, 0, 0, note="empty-output")
    matched = len(answer_match(generated, gold_answers, matcher).matched_gold_ids)
    return MetricValue("AA", matched / len(generated), matched, len(generated))


def answer_coverage(generated: Sequence[str], gold_answers: Sequence[str],
                    matcher: Matcher) -> MetricValue:
    """|A*| / |A_gold|: recall of the generated answer set."""
    if not gold_answers:
        raise UndefinedMetricError("AC is undefined with no gold answers")
    matched = len(answer_match(generated, gold_answers, matcher).matched_gold_ids)
    return MetricValue("AC", matched / len(gold_answers), matched, len(gold_answers))


def exact_match(prediction: str, gold_answers: Sequence[str]) -> int:
    if not gold_answers:
        raise UndefinedMetricError("EM is undefined with no gold answers")
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in gold_answers))


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, gold_answers: Sequence[str]) -> float:
    """Max over gold answers of the bag-of-tokens F1."""
    if not gold_answers:
        raise UndefinedMetricError("F1 is undefined with no gold answers")
    return max(_f1_single(prediction, gold) for gold in gold_answers)


def _doc_of(chunk_id: str) -> str:
    # Chunk ids are "doc_id#ordinal"; rsplit recovers doc_id even when the
    # doc id itself contains '#'.
    return chunk_id.rsplit("#", 1)[0]


def recall_at_k(fused: FusedRanking, gold_passage_ids: Sequence[str],
                k: int) -> float:
    """Fraction of gold passage/document ids present in the fused top k.

    Matching is document-level: a gold id matches a retrieved chunk whose
    chunk id or derived doc id equals it.
    """
    if not gold_passage_ids:
        raise UndefinedMetricError("R@K is undefined with no gold passage ids")
    if k < 1:
        raise ValidationError("k must be >= 1")
    top = [chunk_id for chunk_id, _ in fused.entries[:k]]
    present = set(top) | {_doc_of(cid) for cid in top}
    hits = sum(1 for gold in gold_passage_ids if gold in present)
    return hits / len(gold_passage_ids)


def entropy_upper_bound(dim: int) -> float:
    return math.log(dim)
