"""Documents, chunks, QA records, and the line-delimited JSON formats they live in.

File formats (one JSON object per line):

* corpus:   {"id": str, "title": str, "body": str, "source_uri": str?}
* chunks:   {"id": str, "doc_id": str, "ordinal": int, "body": str, "char_span": [int, int]}
* QA data:  {"id": str, "domain": str?, "question": str, "gold_answers": [str],
             "factual_units": [{"id": str, "statement": str, "intent": str?}],
             "gold_passage_ids": [str]?}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataFormatError, ValidationError

DEFAULT_MAX_CHARS = 1200
DEFAULT_OVERLAP_CHARS = 200

# A paragraph break is a blank line; the greedy \s* swallows runs of them.
_PARAGRAPH_BREAK = re.compile(r"\n\s*\n")
# End of sentence followed by whitespace; trailing quotes/brackets stay attached.
_SENTENCE_BREAK = re.compile(r"[.!?][\"')\]]*\s+")


@dataclass(frozen=True)
class Document:
    """A source document; the unit of ingestion."""

    id: str
    title: str
    body: str
    source_uri: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("document id must be non-empty")
        if not self.body:
            raise ValidationError(f"document {self.id!r} has an empty body")


@dataclass(frozen=True)
class Chunk:
    """A contiguous slice of a document; the unit of embedding and retrieval.

    ``body`` is exactly ``document.body[char_span[0]:char_span[1]]`` and the id
    is the stable ``doc_id#ordinal`` form, so index files and reports do not
    shift between runs.
    """

    id: str
    doc_id: str
    ordinal: int
    body: str
    char_span: tuple[int, int]

    def __post_init__(self) -> None:
        start, end = self.char_span
        if not (0 <= start < end):
            raise ValidationError(f"chunk {self.id!r} has invalid char_span {self.char_span}")
        if self.ordinal < 0:
            raise ValidationError(f"chunk {self.id!r} has negative ordinal")
        if len(self.body) != end - start:
            raise ValidationError(f"chunk {self.id!r} body length does not match char_span")


@dataclass(frozen=True)
class FactualUnit:
    """One atomic gold-annotated fact; the denominator population of recall scoring."""

    id: str
    statement: str
    intent_label: str | None = None

    def __post_init__(self) -> None:
        if not self.statement:
            raise ValidationError(f"factual unit {self.id!r} has an empty statement")


@dataclass(frozen=True)
class GoldAnnotation:
    gold_answers: tuple[str, ...] = ()
    factual_units: tuple[FactualUnit, ...] = ()
    gold_passage_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for unit in self.factual_units:
            if unit.id in seen:
                raise ValidationError(f"duplicate factual unit id {unit.id!r}")
            seen.add(unit.id)


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    question: str
    gold: GoldAnnotation = field(default_factory=GoldAnnotation)
    domain: str | None = None

    def __post_init__(self) -> None:
        if not self.question:
            raise ValidationError(f"question record {self.id!r} has an empty question")


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"malformed JSON ({exc.msg})",
                                      path=str(path), line=line_no) from exc
            if not isinstance(obj, dict):
                raise DataFormatError("expected a JSON object", path=str(path), line=line_no)
            yield line_no, obj


def _require(obj: dict, key: str, path: str | Path, line: int) -> object:
    if key not in obj:
        raise DataFormatError("missing required field", path=str(path), line=line, field=key)
    return obj[key]


def load_corpus(path: str | Path) -> list[Document]:
    """Read a corpus file, validating that document ids are unique."""
    docs: list[Document] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        doc = Document(
            id=str(_require(obj, "id", path, line_no)),
            title=str(_require(obj, "title", path, line_no)),
            body=str(_require(obj, "body", path, line_no)),
            source_uri=obj.get("source_uri"),
        )
        if doc.id in seen:
            raise ValidationError(f"duplicate document id {doc.id!r} (line {line_no})")
        seen.add(doc.id)
        docs.append(doc)
    return docs


def document_to_dict(doc: Document) -> dict:
    out = {"id": doc.id, "title": doc.title, "body": doc.body}
    if doc.source_uri is not None:
        out["source_uri"] = doc.source_uri
    return out


def save_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(json.dumps(document_to_dict(doc), ensure_ascii=False) + "\n")


def chunk_to_dict(chunk: Chunk) -> dict:
    return {
        "id": chunk.id,
        "doc_id": chunk.doc_id,
        "ordinal": chunk.ordinal,
        "body": chunk.body,
        "char_span": list(chunk.char_span),
    }


def save_chunks(chunks: Iterable[Chunk], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for chunk in chunks:
            handle.write(json.dumps(chunk_to_dict(chunk), ensure_ascii=False) + "\n")


def load_chunks(path: str | Path) -> list[Chunk]:
    chunks: list[Chunk] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        span = _require(obj, "char_span", path, line_no)
        chunk = Chunk(
            id=str(_require(obj, "id", path, line_no)),
            doc_id=str(_require(obj, "doc_id", path, line_no)),
            ordinal=int(_require(obj, "ordinal", path, line_no)),
            body=str(_require(obj, "body", path, line_no)),
            char_span=(int(span[0]), int(span[1])),
        )
        if chunk.id in seen:
            raise ValidationError(f"duplicate chunk id {chunk.id!r} (line {line_no})")
        seen.add(chunk.id)
        chunks.append(chunk)
    return chunks


def _paragraph_spans(body: str) -> list[tuple[int, int]]:
    # Each span runs up to the start of the next paragraph, so the trailing
    # separator belongs to the preceding chunk and spans tile [0, len(body)).
    starts = [0]
    for match in _PARAGRAPH_BREAK.finditer(body):
        if match.end() < len(body):
            starts.append(match.end())
    starts = sorted(set(starts))
    return [(start, starts[i + 1] if i + 1 < len(starts) else len(body))
            for i, start in enumerate(starts)]


def _last_sentence_cut(body: str, start: int, window_end: int) -> int | None:
    cut = None
    for match in _SENTENCE_BREAK.finditer(body, start, window_end):
        if start < match.end() <= window_end:
            cut = match.end()
    return cut


def chunk_document(doc: Document, max_chars: int = DEFAULT_MAX_CHARS,
                   overlap_chars: int = DEFAULT_OVERLAP_CHARS) -> list[Chunk]:
    """Split a document into chunks of at most ``max_chars`` characters.

    Paragraphs are the preferred unit: each paragraph that fits becomes one
    chunk. Oversized paragraphs are cut at sentence ends where possible, and
    hard cuts (no break found) slide with exactly ``overlap_chars`` of overlap.
    Every character of the body is covered by at least one chunk, and the
    function is a pure function of its arguments.
    """
    if max_chars <= 0:
        raise ValidationError("max_chars must be positive")
    if not 0 <= overlap_chars < max_chars:
        raise ValidationError("overlap_chars must satisfy 0 <= overlap_chars < max_chars")
    body = doc.body
    if not body:
        return []

    spans: list[tuple[int, int]] = []
    for p_start, p_end in _paragraph_spans(body):
        start = p_start
        while p_end - start > max_chars:
            window_end = start + max_chars
            cut = _last_sentence_cut(body, start, window_end)
            if cut is not None and cut > start:
                spans.append((start, cut))
                start = cut
            else:
                spans.append((start, window_end))
                start = window_end - overlap_chars
        spans.append((start, p_end))

    return [
        Chunk(id=f"{doc.id}#{i}", doc_id=doc.id, ordinal=i,
              body=body[s:e], char_span=(s, e))
        for i, (s, e) in enumerate(spans)
    ]


def load_qa_dataset(path: str | Path) -> list[QuestionRecord]:
    """Read a QA dataset file, validating gold annotations."""
    records: list[QuestionRecord] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        record_id = str(_require(obj, "id", path, line_no))
        question = str(_require(obj, "question", path, line_no))
        units = []
        for raw in obj.get("factual_units", []):
            if "id" not in raw or "statement" not in raw:
                raise DataFormatError("factual unit missing field", path=str(path),
                                      line=line_no, field="factual_units[].id/statement")
            units.append(FactualUnit(id=str(raw["id"]), statement=str(raw["statement"]),
                                     intent_label=raw.get("intent")))
        gold = GoldAnnotation(
            gold_answers=tuple(str(a) for a in obj.get("gold_answers", [])),
            factual_units=tuple(units),
            gold_passage_ids=tuple(str(p) for p in obj.get("gold_passage_ids", [])),
        )
        if not (gold.gold_answers or gold.factual_units or gold.gold_passage_ids):
            raise ValidationError(
                f"record {record_id!r} has no gold annotations (line {line_no})")
        if record_id in seen:
            raise ValidationError(f"duplicate question id {record_id!r} (line {line_no})")
        seen.add(record_id)
        records.append(QuestionRecord(id=record_id, question=question,
                                      gold=gold, domain=obj.get("domain")))
    return records


def question_to_dict(record: QuestionRecord) -> dict:
    out: dict = {"id": record.id, "question": record.question}
    if record.domain is not None:
        out["domain"] = record.domain
    out["gold_answers"] = list(record.gold.gold_answers)
    out["factual_units"] = [
        {"id": u.id, "statement": u.statement, **({"intent": u.intent_label} if u.intent_label else {})}
        for u in record.gold.factual_units
    ]
    if record.gold.gold_passage_ids:
        out["gold_passage_ids"] = list(record.gold.gold_passage_ids)
    return out


def save_qa_dataset(records: Iterable[QuestionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(question_to_dict(record), ensure_ascii=False) + "\n")
