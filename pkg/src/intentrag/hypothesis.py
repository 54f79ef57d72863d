"""Hypothetical query generation: hypothesize answers, decompose into intent queries.

The two-call protocol is: (1) ask the LLM for up to M distinct hypothetical
answer passages, then (2) decompose each passage into intent-specific
declarative statements. The union of statements across passages, deduplicated
by normalized text, forms the query pool. The raw question is always kept in
the pool as a fallback query, so retrieval never regresses below the naive
single-query baseline; the fallback carries the sentinel query ref (0, 0).

A second mode for single-subject questions skips hypothesizing and asks the
LLM to split the question into at least two independent facet statements.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import prompts
from .corpus import QuestionRecord
from .errors import GenerationFormatError, ProviderError, ValidationError
from .llm import LlmProvider, TranscriptLog

RAW_QUERY_REF = (0, 0)

MODE_NAIVE = "naive"
MODE_SINGLE_HYPOTHETICAL = "single_hypothetical"
MODE_MULTI_INTENT = "multi_intent"
MODE_SINGLE_SUBJECT = "single_subject_split"

POOL_MODES = (MODE_NAIVE, MODE_SINGLE_HYPOTHETICAL, MODE_MULTI_INTENT, MODE_SINGLE_SUBJECT)

DEFAULT_MAX_INSTANCES = 5
MAX_STATEMENT_CHARS = 512

_BULLET = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s*")
_WS = re.compile(r"\s+")
_SENTENCE_END = re.compile(r"[.!?][\"')\]]*\s")


@dataclass(frozen=True)
class HypotheticalAnswer:
    """One hypothetical answer passage; ``m`` is the 1-based instance index."""

    m: int
    body: str

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValidationError("hypothetical answer index m must be >= 1")
        if not self.body.strip():
            raise ValidationError("hypothetical answer body must be non-empty")


@dataclass(frozen=True)
class IntentQuery:
    """One retrieval query: statement ``l`` of hypothetical instance ``m``.

    (m, l) == (0, 0) marks the raw-question fallback query.
    """

    m: int
    l: int
    statement: str

    def __post_init__(self) -> None:
        if not self.statement.strip():
            raise ValidationError("intent query statement must be non-empty")
        if (self.m, self.l) != RAW_QUERY_REF and (self.m < 1 or self.l < 1):
            raise ValidationError(f"invalid query ref ({self.m}, {self.l})")

    @property
    def is_raw_question(self) -> bool:
        return (self.m, self.l) == RAW_QUERY_REF

    @property
    def query_ref(self) -> tuple[int, int]:
        return (self.m, self.l)


@dataclass(frozen=True)
class QueryPool:
    question_id: str
    queries: tuple[IntentQuery, ...]
    mode: str
    degraded: bool = False

    def __post_init__(self) -> None:
        if self.mode not in POOL_MODES:
            raise ValidationError(f"unknown pool mode {self.mode!r}")
        if not self.queries:
            raise ValidationError("query pool must be non-empty")
        keys = [dedup_key(q.statement) for q in self.queries]
        if len(set(keys)) != len(keys):
            raise ValidationError("query pool contains duplicate normalized statements")

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "mode": self.mode,
            "degraded": self.degraded,
            "queries": [{"m": q.m, "l": q.l, "statement": q.statement}
                        for q in self.queries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QueryPool":
        return cls(
            question_id=data["question_id"],
            queries=tuple(IntentQuery(q["m"], q["l"], q["statement"])
                          for q in data["queries"]),
            mode=data["mode"],
            degraded=bool(data.get("degraded", False)),
        )


def normalize_statement(text: str) -> str:
    """Collapse whitespace and cap length at a sentence boundary near 512 chars."""
    text = _WS.sub(" ", text).strip()
    if len(text) <= MAX_STATEMENT_CHARS:
        return text
    cut = None
    for match in _SENTENCE_END.finditer(text, 0, MAX_STATEMENT_CHARS + 1):
        cut = match.end()
    return text[:cut].strip() if cut else text[:MAX_STATEMENT_CHARS].rstrip()


def dedup_key(statement: str) -> str:
    return _WS.sub(" ", statement).strip().casefold()


def parse_enumerated(text: str) -> list[str]:
    """Parse a numbered/bulleted list; accepts "1.", "1)" and "-" markers.

    Lines without a marker continue the current item. Text with no markers at
    all is treated as a single item. Returns [] only for blank output.
    """
    items: list[str] = []
    current: list[str] | None = None
    saw_bullet = False
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        match = _BULLET.match(line)
        if match:
            saw_bullet = True
            if current:
                items.append(" ".join(current))
            current = [line[match.end():].strip()] if line[match.end():].strip() else []
        elif current is not None:
            current.append(stripped)
        else:
            current = [stripped]
    if current:
        items.append(" ".join(current))
    if not saw_bullet and items:
        items = [" ".join(items)]
    return [item for item in items if item]


def _call(llm: LlmProvider, prompt: str, *, call_kind: str, temperature: float,
          max_tokens: int, transcript: TranscriptLog | None, question_id: str) -> str:
    response = llm.complete(prompts.SYSTEM_PROMPT, prompt,
                            temperature=temperature, max_tokens=max_tokens)
    if transcript is not None:
        transcript.append(question_id, call_kind, prompt, response)
    return response


def _call_enumerated(llm, prompt, *, call_kind, temperature, max_tokens,
                     transcript, question_id, minimum: int) -> list[str]:
    """One call plus at most one repair re-prompt; raises GenerationFormatError
    if the output still parses to fewer than ``minimum`` items."""
    response = _call(llm, prompt, call_kind=call_kind, temperature=temperature,
                     max_tokens=max_tokens, transcript=transcript,
                     question_id=question_id)
    items = parse_enumerated(response)
    if len(items) >= minimum:
        return items
    try:
        repair_response = _call(llm, prompts.repair_prompt(prompt),
                                call_kind=f"{call_kind}_repair", temperature=0.0,
                                max_tokens=max_tokens, transcript=transcript,
                                question_id=question_id)
    except ProviderError:
        raise GenerationFormatError(
            f"{call_kind} output unparseable and repair unavailable", response) from None
    items = parse_enumerated(repair_response)
    if len(items) >= minimum:
        return items
    raise GenerationFormatError(
        f"{call_kind} output still yields fewer than {minimum} items after repair",
        repair_response)


def generate_hypotheses(llm: LlmProvider, question: str,
                        max_instances: int = DEFAULT_MAX_INSTANCES, *,
                        temperature: float = 0.7,
                        max_tokens: int = 1024,
                        transcript: TranscriptLog | None = None,
                        question_id: str = "") -> list[HypotheticalAnswer]:
    """Ask for up to ``max_instances`` distinct hypothetical answer passages."""
    if not question.strip():
        raise ValidationError("question must be non-empty")
    if max_instances < 1:
        raise ValidationError("max_instances must be >= 1")
    items = _call_enumerated(
        llm, prompts.render_generation(question, max_instances),
        call_kind="generate_hypotheses", temperature=temperature,
        max_tokens=max_tokens, transcript=transcript, question_id=question_id,
        minimum=1)
    return [HypotheticalAnswer(m=i + 1, body=body)
            for i, body in enumerate(items[:max_instances])]


def decompose_hypothesis(llm: LlmProvider, question: str,
                         hypothesis: HypotheticalAnswer, *,
                         max_tokens: int = 1024,
                         transcript: TranscriptLog | None = None,
                         question_id: str = "") -> list[IntentQuery]:
    """Decompose one hypothetical answer into intent-specific statements.

    Statement indices l are assigned 1..L in output order; decomposition runs
    at temperature 0 so parsing stays reproducible.
    """
    items = _call_enumerated(
        llm, prompts.render_decomposition(question, hypothesis.body),
        call_kind="decompose_hypothesis", temperature=0.0,
        max_tokens=max_tokens, transcript=transcript, question_id=question_id,
        minimum=1)
    return [IntentQuery(m=hypothesis.m, l=i + 1, statement=normalize_statement(item))
            for i, item in enumerate(items)]


def split_single_subject(llm: LlmProvider, question: str, *,
                         max_tokens: int = 1024,
                         transcript: TranscriptLog | None = None,
                         question_id: str = "") -> list[IntentQuery]:
    """Split a single-subject question into at least two independent queries."""
    if not question.strip():
        raise ValidationError("question must be non-empty")
    items = _call_enumerated(
        llm, prompts.render_split(question),
        call_kind="split_single_subject", temperature=0.0,
        max_tokens=max_tokens, transcript=transcript, question_id=question_id,
        minimum=2)
    deduped: list[str] = []
    seen: set[str] = set()
    for item in items:
        key = dedup_key(item)
        if key not in seen:
            seen.add(key)
            deduped.append(item)
    if len(deduped) < 2:
        raise GenerationFormatError(
            "single-subject split produced fewer than 2 distinct statements",
            "\n".join(items))
    return [IntentQuery(m=1, l=i + 1, statement=normalize_statement(item))
            for i, item in enumerate(deduped)]


def naive_pool(record: QuestionRecord) -> QueryPool:
    """The baseline pool: just the raw question."""
    return QueryPool(
        question_id=record.id,
        queries=(IntentQuery(*RAW_QUERY_REF, normalize_statement(record.question)),),
        mode=MODE_NAIVE,
    )


def build_query_pool(record: QuestionRecord, llm: LlmProvider, *,
                     mode: str = MODE_MULTI_INTENT,
                     max_instances: int = DEFAULT_MAX_INSTANCES,
                     temperature: float = 0.7,
                     max_tokens: int = 1024,
                     transcript: TranscriptLog | None = None) -> QueryPool:
    """Build the deduplicated query pool for one question.

    If every generation call fails, the pool degrades to the raw question
    alone and the ``degraded`` flag is set; partial failures keep whatever
    statements were produced. The reduction is ordered by (m, l), so the pool
    is a pure function of the LLM transcript.
    """
    if mode == MODE_NAIVE:
        return naive_pool(record)

    question = record.question
    statements: list[IntentQuery] = []
    degraded = False

    if mode == MODE_MULTI_INTENT:
        try:
            instances = generate_hypotheses(
                llm, question, max_instances, temperature=temperature,
                max_tokens=max_tokens, transcript=transcript, question_id=record.id)
        except ProviderError:
            instances = []
        for instance in instances:
            try:
                statements.extend(decompose_hypothesis(
                    llm, question, instance, max_tokens=max_tokens,
                    transcript=transcript, question_id=record.id))
            except ProviderError:
                continue
        if not statements:
            degraded = True
    elif mode == MODE_SINGLE_HYPOTHETICAL:
        try:
            instances = generate_hypotheses(
                llm, question, 1, temperature=temperature,
                max_tokens=max_tokens, transcript=transcript, question_id=record.id)
            statements = [IntentQuery(m=1, l=1,
                                      statement=normalize_statement(instances[0].body))]
        except ProviderError:
            degraded = True
    elif mode == MODE_SINGLE_SUBJECT:
        try:
            statements = split_single_subject(
                llm, question, max_tokens=max_tokens, transcript=transcript,
                question_id=record.id)
        except ProviderError:
            degraded = True
    else:
        raise ValidationError(f"unknown pool mode {mode!r}")

    # Dedup by normalized text; the raw-question fallback is reserved first so
    # a generated duplicate of the question cannot collide with it.
    raw_statement = normalize_statement(question)
    seen = {dedup_key(raw_statement)}
    kept: list[IntentQuery] = []
    for query in statements:
        key = dedup_key(query.statement)
        if key not in seen:
            seen.add(key)
            kept.append(query)
    kept.append(IntentQuery(*RAW_QUERY_REF, raw_statement))
    return QueryPool(question_id=record.id, queries=tuple(kept),
                     mode=mode, degraded=degraded)
