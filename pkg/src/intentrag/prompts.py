"""Versioned prompt templates, loaded from package data and referenced by hash.

Templates are plain text files with ``{placeholder}`` slots filled by
literal replacement (not str.format), so question text containing braces
cannot break rendering. Every rendered prompt is reproducible from the
template file plus its inputs, and template hashes go into run fingerprints.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources
from typing import Sequence

SYSTEM_PROMPT = "You answer retrieval-pipeline requests exactly in the requested format."

REPAIR_NOTE = ('Your previous reply could not be parsed. Reply again as a plain '
               'numbered list ("1.", "2.", ...), one item per line, with no other text.')

TEMPLATE_NAMES = (
    "hypothesis_generation",
    "hypothesis_decomposition",
    "single_subject_split",
    "answer_synthesis",
    "judge_alignment",
)


@lru_cache(maxsize=None)
def _raw(name: str) -> str:
    return (resources.files(__package__) / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def template_hash(name: str) -> str:
    return hashlib.sha256(_raw(name).encode("utf-8")).hexdigest()


def all_template_hashes() -> dict[str, str]:
    return {name: template_hash(name) for name in TEMPLATE_NAMES}


def _render(name: str, **slots: str) -> str:
    text = _raw(name)
    for key, value in slots.items():
        text = text.replace("{" + key + "}", value)
    return text.strip()


def render_generation(question: str, max_instances: int) -> str:
    return _render("hypothesis_generation", question=question,
                   max_instances=str(max_instances))


def render_decomposition(question: str, hypothesis: str) -> str:
    return _render("hypothesis_decomposition", question=question, hypothesis=hypothesis)


def render_split(question: str) -> str:
    return _render("single_subject_split", question=question)


def render_answer(question: str, passages: Sequence[str]) -> str:
    numbered = "\n".join(f"[{i}] {p}" for i, p in enumerate(passages, start=1))
    return _render("answer_synthesis", question=question, passages=numbered)


def render_judge(gold: str, candidate: str) -> str:
    return _render("judge_alignment", gold=gold, candidate=candidate)


def repair_prompt(original: str) -> str:
    return f"{original}\n\n{REPAIR_NOTE}"
