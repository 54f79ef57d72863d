"""End-to-end orchestration: question -> query pool -> retrieval -> fusion -> metrics.

Four retrieval strategies are supported:

* ``naive``: embed the raw question, one retrieval pass.
* ``single_hypothetical``: embed one whole hypothetical answer passage.
* ``multi_intent``: hypothetical query generation with per-intent retrieval
  and reciprocal-rank fusion.
* ``single_subject_split``: split a single-subject question into independent
  facet queries, then fuse.

Evaluation runs never abort on one bad question: per-question failures are
recorded, excluded from aggregates, and counted. With the deterministic mock
embedder and a scripted LLM, two runs of the same evaluation produce
byte-identical report JSON regardless of the worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import prompts
from .corpus import QuestionRecord
from .embedding import (
    EmbeddingProvider,
    EmbeddingProviderConfig,
    EmbeddingVector,
    create_embedder,
    embed_batch,
)
from .errors import (
    DimensionMismatchError,
    GenerationFormatError,
    IntentRagError,
    ProviderError,
    ValidationError,
)
from .fusion import DEFAULT_OUTPUT_DEPTH, DEFAULT_SMOOTHING, FusedRanking, rrf_fuse, truncate
from .hypothesis import (
    DEFAULT_MAX_INSTANCES,
    MODE_MULTI_INTENT,
    MODE_NAIVE,
    MODE_SINGLE_HYPOTHETICAL,
    MODE_SINGLE_SUBJECT,
    QueryPool,
    build_query_pool,
    dedup_key,
    parse_enumerated,
)
from .index import RankedList, VectorIndex, search
from .llm import LlmProvider, LlmProviderConfig, TranscriptLog, create_llm
from .metrics import (
    Matcher,
    MatcherConfig,
    answer_accuracy,
    answer_coverage,
    create_matcher,
    exact_match,
    information_recall_rate,
    recall_at_k,
    token_f1,
    vector_entropy,
)

STRATEGY_KINDS = (MODE_NAIVE, MODE_SINGLE_HYPOTHETICAL, MODE_MULTI_INTENT,
                  MODE_SINGLE_SUBJECT)

SWEEP_PARAMETERS = ("fusion_smoothing", "output_depth")

# Canonical column order for reports and tables.
_METRIC_ORDER = ("h_mix", "irr", "aa", "ac", "em", "f1", "recall_at_k")
_METRIC_LABELS = {"h_mix": "H_mix", "irr": "IRR", "aa": "AA", "ac": "AC",
                  "em": "EM", "f1": "F1", "recall_at_k": "R@K"}


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    embedder: EmbeddingProviderConfig
    llm: LlmProviderConfig | None = None
    fusion_smoothing: int = DEFAULT_SMOOTHING
    per_query_depth: int = DEFAULT_OUTPUT_DEPTH
    output_depth: int = DEFAULT_OUTPUT_DEPTH
    seed: int = 0
    max_instances: int = DEFAULT_MAX_INSTANCES

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")
        if self.kind != MODE_NAIVE and self.llm is None:
            raise ValidationError(f"strategy {self.kind!r} requires an LLM config")
        for name in ("fusion_smoothing", "per_query_depth", "output_depth",
                     "max_instances"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "embedder": self.embedder.to_dict(),
            "llm": self.llm.to_dict() if self.llm else None,
            "fusion_smoothing": self.fusion_smoothing,
            "per_query_depth": self.per_query_depth,
            "output_depth": self.output_depth,
            "seed": self.seed,
            "max_instances": self.max_instances,
        }


def config_fingerprint(strategy: StrategyConfig, index: VectorIndex) -> str:
    payload = {
        "strategy": strategy.to_dict(),
        "prompt_templates": prompts.all_template_hashes(),
        "index_hash": index.content_hash(),
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def canonical_json(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


@dataclass
class PipelineResult:
    question_id: str
    query_pool: QueryPool
    ranked_lists: tuple[RankedList, ...]
    fused: FusedRanking
    generated_answers: tuple[str, ...] | None = None
    degraded: bool = False
    query_vectors: tuple[EmbeddingVector, ...] = ()
    transcript_path: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_volatile: bool = False) -> dict:
        out = {
            "question_id": self.question_id,
            "degraded": self.degraded,
            "query_pool": self.query_pool.to_dict(),
            "ranked_lists": [ranked.to_dict() for ranked in self.ranked_lists],
            "fused": self.fused.to_dict(),
            "generated_answers": (list(self.generated_answers)
                                  if self.generated_answers is not None else None),
        }
        if include_volatile:
            out["timings"] = dict(self.timings)
            out["transcript_path"] = self.transcript_path
        return out

    def to_json(self) -> str:
        # Timings and transcript paths are volatile; the canonical form leaves
        # them out so identical runs serialize byte-identically.
        return canonical_json(self.to_dict())


class QueryPoolCache:
    """Disk cache of query pools keyed by question, mode, model, seed, and
    prompt template hashes, so sweeps and strategy comparisons do not re-bill
    or re-randomize the LLM."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _key(self, record: QuestionRecord, strategy: StrategyConfig) -> str:
        payload = {
            "question_id": record.id,
            "question": record.question,
            "mode": strategy.kind,
            "max_instances": strategy.max_instances,
            "model": strategy.llm.model_name if strategy.llm else None,
            "seed": strategy.seed,
            "prompt_templates": prompts.all_template_hashes(),
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def get(self, record: QuestionRecord, strategy: StrategyConfig) -> QueryPool | None:
        path = self.directory / f"{self._key(record, strategy)}.json"
        if not path.exists():
            return None
        return QueryPool.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, record: QuestionRecord, strategy: StrategyConfig,
            pool: QueryPool) -> None:
        path = self.directory / f"{self._key(record, strategy)}.json"
        path.write_text(canonical_json(pool.to_dict()), encoding="utf-8")


def _build_pool(record: QuestionRecord, strategy: StrategyConfig,
                llm: LlmProvider | None, transcript: TranscriptLog | None,
                pool_cache: QueryPoolCache | None) -> QueryPool:
    if pool_cache is not None:
        cached = pool_cache.get(record, strategy)
        if cached is not None:
            return cached
    if strategy.kind == MODE_NAIVE:
        pool = build_query_pool(record, llm, mode=MODE_NAIVE)
    else:
        assert llm is not None
        temperature = strategy.llm.temperature if strategy.llm else 0.7
        max_tokens = strategy.llm.max_output_tokens if strategy.llm else 1024
        pool = build_query_pool(record, llm, mode=strategy.kind,
                                max_instances=strategy.max_instances,
                                temperature=temperature, max_tokens=max_tokens,
                                transcript=transcript)
    if pool_cache is not None:
        pool_cache.put(record, strategy, pool)
    return pool


def _passage_texts(fused: FusedRanking, chunk_bodies: Mapping[str, str]) -> list[str]:
    texts = []
    for chunk_id in fused.chunk_ids():
        if chunk_id not in chunk_bodies:
            raise ValidationError(f"no body known for retrieved chunk {chunk_id!r}")
        texts.append(chunk_bodies[chunk_id])
    return texts


def generate_answer(llm: LlmProvider, question: str,
                    passages: Sequence[str], *,
                    max_tokens: int = 1024,
                    transcript: TranscriptLog | None = None,
                    question_id: str = "") -> list[str]:
    """Synthesize the distinct answers supported by the passages.

    The prompt asks for an enumeration; output is parsed as a numbered list
    with one repair re-prompt, then deduplicated preserving order.
    """
    if not passages:
        raise ValidationError("cannot generate an answer from zero passages")
    prompt = prompts.render_answer(question, passages)
    response = llm.complete(prompts.SYSTEM_PROMPT, prompt, temperature=0.0,
                            max_tokens=max_tokens)
    if transcript is not None:
        transcript.append(question_id, "generate_answer", prompt, response)
    items = parse_enumerated(response)
    if not items:
        repair = prompts.repair_prompt(prompt)
        try:
            response = llm.complete(prompts.SYSTEM_PROMPT, repair,
                                    temperature=0.0, max_tokens=max_tokens)
        except ProviderError:
            raise GenerationFormatError("answer synthesis output unparseable",
                                        response) from None
        if transcript is not None:
            transcript.append(question_id, "generate_answer_repair", repair, response)
        items = parse_enumerated(response)
        if not items:
            raise GenerationFormatError("answer synthesis output unparseable "
                                        "after repair", response)
    seen: set[str] = set()
    answers = []
    for item in items:
        key = dedup_key(item)
        if key not in seen:
            seen.add(key)
            answers.append(item)
    return answers


def run_question(record: QuestionRecord, index: VectorIndex,
                 strategy: StrategyConfig, *,
                 embedder: EmbeddingProvider | None = None,
                 llm: LlmProvider | None = None,
                 transcript: TranscriptLog | None = None,
                 pool_cache: QueryPoolCache | None = None,
                 generate_answers: bool = False,
                 chunk_bodies: Mapping[str, str] | None = None) -> PipelineResult:
    """Run the full retrieval pipeline for one question."""
    if embedder is None:
        embedder = create_embedder(strategy.embedder)
    if embedder.dim != index.dim:
        raise DimensionMismatchError(
            f"embedder dim {embedder.dim} != index dim {index.dim}")
    if llm is None and strategy.llm is not None:
        llm = create_llm(strategy.llm)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    pool = _build_pool(record, strategy, llm, transcript, pool_cache)
    timings["pool_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    vectors = embed_batch(embedder, [q.statement for q in pool.queries])
    ranked_lists = tuple(
        search(index, vector, strategy.per_query_depth, query_ref=query.query_ref)
        for query, vector in zip(pool.queries, vectors)
    )
    timings["retrieval_ms"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    fused = truncate(rrf_fuse(ranked_lists, strategy.fusion_smoothing),
                     strategy.output_depth)
    timings["fusion_ms"] = (time.perf_counter() - t0) * 1000.0

    answers: tuple[str, ...] | None = None
    if generate_answers:
        if llm is None:
            raise ValidationError("answer generation requires an LLM")
        if chunk_bodies is None:
            raise ValidationError("answer generation requires chunk bodies")
        t0 = time.perf_counter()
        texts = _passage_texts(fused, chunk_bodies)
        answers = tuple(generate_answer(
            llm, record.question, texts,
            max_tokens=strategy.llm.max_output_tokens if strategy.llm else 1024,
            transcript=transcript, question_id=record.id))
        timings["answer_ms"] = (time.perf_counter() - t0) * 1000.0

    return PipelineResult(
        question_id=record.id,
        query_pool=pool,
        ranked_lists=ranked_lists,
        fused=fused,
        generated_answers=answers,
        degraded=pool.degraded,
        query_vectors=tuple(vectors),
        timings=timings,
    )


@dataclass
class EvalReport:
    config_fingerprint: str
    per_question: dict[str, dict[str, float]]
    aggregates: dict[str, float]
    failures: tuple[dict, ...] = ()
    degraded_question_ids: tuple[str, ...] = ()

    @property
    def question_count(self) -> int:
        return len(self.per_question) + len(self.failures)

    def to_dict(self) -> dict:
        return {
            "config_fingerprint": self.config_fingerprint,
            "question_count": self.question_count,
            "failure_count": len(self.failures),
            "per_question": self.per_question,
            "aggregates": self.aggregates,
            "failures": list(self.failures),
            "degraded_question_ids": list(self.degraded_question_ids),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def metric_keys(self) -> list[str]:
        present = {key for values in self.per_question.values() for key in values}
        return [key for key in _METRIC_ORDER if key in present]

    def to_csv(self) -> str:
        keys = self.metric_keys()
        lines = [",".join(["question_id"] + keys)]
        for qid, values in self.per_question.items():
            row = [qid] + [repr(values[key]) if key in values else "" for key in keys]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_markdown(self, label: str = "strategy") -> str:
        keys = self.metric_keys()
        header = "| Strategy | " + " | ".join(_METRIC_LABELS[k] for k in keys) + " |"
        rule = "|" + "---|" * (len(keys) + 1)
        cells = [f"{self.aggregates[k]:.4f}" if k in self.aggregates else ""
                 for k in keys]
        return "\n".join([header, rule, "| " + " | ".join([label] + cells) + " |"]) + "\n"


def _aggregate(per_question: dict[str, dict[str, float]]) -> dict[str, float]:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for values in per_question.values():
        for key, value in values.items():
            sums[key] = sums.get(key, 0.0) + value
            counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def _question_metrics(record: QuestionRecord, result: PipelineResult,
                      strategy: StrategyConfig, matcher: Matcher,
                      chunk_bodies: Mapping[str, str] | None) -> dict[str, float]:
    values: dict[str, float] = {}
    values["h_mix"] = vector_entropy(result.query_vectors)

    texts: list[str] | None = None
    if chunk_bodies is not None:
        texts = _passage_texts(result.fused, chunk_bodies)

    if record.gold.factual_units and texts is not None:
        values["irr"] = information_recall_rate(
            texts, list(record.gold.factual_units), matcher).value

    if result.generated_answers is not None and record.gold.gold_answers:
        answers = list(result.generated_answers)
        values["aa"] = answer_accuracy(answers, list(record.gold.gold_answers),
                                       matcher).value
        values["ac"] = answer_coverage(answers, list(record.gold.gold_answers),
                                       matcher).value
        # EM and F1 are single-prediction scores; the first enumerated answer
        # is the system's primary answer.
        values["em"] = float(exact_match(answers[0], list(record.gold.gold_answers)))
        values["f1"] = token_f1(answers[0], list(record.gold.gold_answers))

    if record.gold.gold_passage_ids:
        values["recall_at_k"] = recall_at_k(
            result.fused, list(record.gold.gold_passage_ids), strategy.output_depth)
    return values


def _resolve_matcher(matcher: Matcher | MatcherConfig) -> Matcher:
    if isinstance(matcher, MatcherConfig):
        return create_matcher(matcher)
    return matcher


def run_evaluation(dataset: Sequence[QuestionRecord], index: VectorIndex,
                   strategy: StrategyConfig, matcher: Matcher | MatcherConfig, *,
                   chunk_bodies: Mapping[str, str] | None = None,
                   workers: int = 1,
                   transcript: TranscriptLog | None = None,
                   pool_cache: QueryPoolCache | None = None) -> EvalReport:
    """Evaluate a strategy over a dataset and aggregate per-question metrics.

    Answers are generated (enabling AA/AC/EM/F1) whenever the strategy has an
    LLM, chunk bodies are available, and the record carries gold answers.
    Results are reduced in dataset order whatever the worker count.
    """
    matcher = _resolve_matcher(matcher)
    embedder = create_embedder(strategy.embedder)
    if embedder.dim != index.dim:
        raise DimensionMismatchError(
            f"embedder dim {embedder.dim} != index dim {index.dim}")
    llm = create_llm(strategy.llm) if strategy.llm is not None else None

    def one(record: QuestionRecord):
        try:
            wants_answers = (llm is not None and chunk_bodies is not None
                             and bool(record.gold.gold_answers))
            result = run_question(record, index, strategy, embedder=embedder,
                                  llm=llm, transcript=transcript,
                                  pool_cache=pool_cache,
                                  generate_answers=wants_answers,
                                  chunk_bodies=chunk_bodies)
            metrics = _question_metrics(record, result, strategy, matcher,
                                        chunk_bodies)
            return record.id, metrics, result.degraded, None
        except IntentRagError as exc:
            return record.id, None, False, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, dataset))
    else:
        outcomes = [one(record) for record in dataset]

    per_question: dict[str, dict[str, float]] = {}
    failures: list[dict] = []
    degraded: list[str] = []
    for qid, metrics, was_degraded, error in outcomes:
        if error is not None:
            failures.append({"question_id": qid, "error": error})
            continue
        per_question[qid] = metrics
        if was_degraded:
            degraded.append(qid)

    return EvalReport(
        config_fingerprint=config_fingerprint(strategy, index),
        per_question=per_question,
        aggregates=_aggregate(per_question),
        failures=tuple(failures),
        degraded_question_ids=tuple(degraded),
    )


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    report: EvalReport | None
    error: str | None = None


@dataclass(frozen=True)
class StrategyComparison:
    rows: tuple[ComparisonRow, ...]

    def to_markdown(self) -> str:
        keys = []
        for row in self.rows:
            if row.report is not None:
                for key in row.report.metric_keys():
                    if key not in keys:
                        keys.append(key)
        keys = [key for key in _METRIC_ORDER if key in keys]
        lines = ["| Strategy | " + " | ".join(_METRIC_LABELS[k] for k in keys) + " |",
                 "|" + "---|" * (len(keys) + 1)]
        for row in self.rows:
            if row.report is None:
                cells = [f"error: {row.error}"] + [""] * (len(keys) - 1) if keys else []
            else:
                cells = [f"{row.report.aggregates[k]:.4f}"
                         if k in row.report.aggregates else "" for k in keys]
            lines.append("| " + " | ".join([row.label] + cells) + " |")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "label": row.label,
                    "error": row.error,
                    "report": row.report.to_dict() if row.report else None,
                }
                for row in self.rows
            ]
        }


def compare_strategies(dataset: Sequence[QuestionRecord], index: VectorIndex,
                       strategies: Sequence[StrategyConfig],
                       matcher: Matcher | MatcherConfig, *,
                       chunk_bodies: Mapping[str, str] | None = None,
                       workers: int = 1,
                       pool_cache: QueryPoolCache | None = None) -> StrategyComparison:
    """Evaluate each strategy on the same dataset; failures become row
    annotations instead of aborting the comparison."""
    if len(strategies) < 2:
        raise ValidationError("compare_strategies needs at least 2 strategies")
    rows = []
    for strategy in strategies:
        try:
            report = run_evaluation(dataset, index, strategy, matcher,
                                    chunk_bodies=chunk_bodies, workers=workers,
                                    pool_cache=pool_cache)
            rows.append(ComparisonRow(label=strategy.kind, report=report))
        except IntentRagError as exc:
            rows.append(ComparisonRow(label=strategy.kind, report=None,
                                      error=f"{type(exc).__name__}: {exc}"))
    return StrategyComparison(rows=tuple(rows))


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    rows: tuple[dict, ...]

    def to_csv(self) -> str:
        keys: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in ("value",) and key not in keys:
                    keys.append(key)
        keys = [k for k in _METRIC_ORDER if k in keys] + \
               [k for k in keys if k not in _METRIC_ORDER]
        lines = [",".join([self.parameter] + keys)]
        for row in self.rows:
            lines.append(",".join([str(row["value"])] +
                                  [repr(row[k]) if k in row else "" for k in keys]))
        return "\n".join(lines) + "\n"


def sweep(dataset: Sequence[QuestionRecord], index: VectorIndex,
          strategy: StrategyConfig, parameter: str, values: Sequence[int],
          matcher: Matcher | MatcherConfig, *,
          chunk_bodies: Mapping[str, str] | None = None,
          transcript: TranscriptLog | None = None,
          pool_cache: QueryPoolCache | None = None) -> SweepResult:
    """Re-evaluate the strategy across parameter values, holding all else fixed.

    Query pools and per-query ranked lists are built once and reused, so only
    fusion and truncation vary between values. Sweeps score the retrieval
    stage (H_mix, IRR, R@K); answer generation is deliberately skipped so a
    sweep never re-bills the LLM per value.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValidationError(
            f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    if len(set(values)) != len(values):
        raise ValidationError("sweep values must be distinct")
    if any(v < 1 for v in values):
        raise ValidationError("sweep values must be positive")

    matcher = _resolve_matcher(matcher)
    embedder = create_embedder(strategy.embedder)
    llm = create_llm(strategy.llm) if strategy.llm is not None else None
    if embedder.dim != index.dim:
        raise DimensionMismatchError(
            f"embedder dim {embedder.dim} != index dim {index.dim}")

    staged = []  # (record, vectors, ranked_lists) or (record, error)
    for record in dataset:
        try:
            pool = _build_pool(record, strategy, llm, transcript, pool_cache)
            vectors = embed_batch(embedder, [q.statement for q in pool.queries])
            lists = tuple(
                search(index, vector, strategy.per_query_depth,
                       query_ref=query.query_ref)
                for query, vector in zip(pool.queries, vectors)
            )
            staged.append((record, vectors, lists, None))
        except IntentRagError as exc:
            staged.append((record, None, None, f"{type(exc).__name__}: {exc}"))

    rows = []
    for value in values:
        smoothing = value if parameter == "fusion_smoothing" else strategy.fusion_smoothing
        depth = value if parameter == "output_depth" else strategy.output_depth
        per_question: dict[str, dict[str, float]] = {}
        failure_count = 0
        for record, vectors, lists, error in staged:
            if error is not None:
                failure_count += 1
                continue
            try:
                fused = truncate(rrf_fuse(lists, smoothing), depth)
                metrics: dict[str, float] = {"h_mix": vector_entropy(vectors)}
                if record.gold.factual_units and chunk_bodies is not None:
                    texts = _passage_texts(fused, chunk_bodies)
                    metrics["irr"] = information_recall_rate(
                        texts, list(record.gold.factual_units), matcher).value
                if record.gold.gold_passage_ids:
                    metrics["recall_at_k"] = recall_at_k(
                        fused, list(record.gold.gold_passage_ids), depth)
                per_question[record.id] = metrics
            except IntentRagError:
                failure_count += 1
        row = {"value": value, **_aggregate(per_question)}
        row["failures"] = float(failure_count)
        rows.append(row)
    return SweepResult(parameter=parameter, rows=tuple(rows))


def strategy_with(strategy: StrategyConfig, **overrides) -> StrategyConfig:
    return dataclasses.replace(strategy, **overrides)
