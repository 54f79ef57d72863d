"""Chat-completions LLM providers: a remote HTTP backend and a scripted mock.

The mock answers from a map of prompt fingerprints to canned responses, which
makes every LLM-dependent operation deterministic and replayable from a
recorded transcript. Transcript records are line-delimited JSON:

    {"question_id", "call_kind", "prompt_hash", "prompt", "response", "timestamp"}
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import httpx

from ._http import RETRY_ATTEMPTS, RETRY_BASE_DELAY, post_json
from .errors import ContractViolationError, ScriptMissError, ValidationError

BACKEND_REMOTE = "remote_http"
BACKEND_SCRIPTED = "scripted_mock"

ENV_LLM_API_KEY = "LLM_API_KEY"
ENV_LLM_BASE_URL = "LLM_BASE_URL"


def prompt_fingerprint(prompt: str) -> str:
    """Stable identity of a rendered prompt; keys scripts and transcripts."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmProviderConfig:
    backend_kind: str = BACKEND_SCRIPTED
    model_name: str = "scripted"
    endpoint: str | None = None
    temperature: float = 0.7
    max_output_tokens: int = 1024
    script: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        if self.backend_kind not in (BACKEND_REMOTE, BACKEND_SCRIPTED):
            raise ValidationError(f"unknown LLM backend {self.backend_kind!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValidationError("temperature must be within [0, 2]")
        if self.max_output_tokens < 1:
            raise ValidationError("max_output_tokens must be positive")

    def to_dict(self) -> dict:
        out = {
            "backend_kind": self.backend_kind,
            "model_name": self.model_name,
            "endpoint": self.endpoint,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }
        if self.script is not None:
            digest = hashlib.sha256(
                json.dumps(sorted(self.script.items())).encode("utf-8")).hexdigest()
            out["script_hash"] = digest
        return out


class ScriptedMockLlm:
    """Answers prompts from a fingerprint-keyed script; misses raise."""

    def __init__(self, script: Mapping[str, str] | None = None,
                 model_name: str = "scripted") -> None:
        self.script = dict(script or {})
        self.model_name = model_name

    @classmethod
    def from_prompts(cls, prompts: Mapping[str, str], model_name: str = "scripted") -> "ScriptedMockLlm":
        return cls({prompt_fingerprint(p): r for p, r in prompts.items()}, model_name)

    @classmethod
    def from_transcript(cls, records: Iterable[Mapping], model_name: str = "scripted") -> "ScriptedMockLlm":
        return cls(script_from_transcript(records), model_name)

    def complete(self, system: str, user: str, *, temperature: float,
                 max_tokens: int) -> str:
        fingerprint = prompt_fingerprint(user)
        if fingerprint not in self.script:
            preview = user if len(user) <= 120 else user[:117] + "..."
            raise ScriptMissError(f"no scripted response for prompt {fingerprint[:12]}... "
                                  f"({preview!r})")
        return self.script[fingerprint]


class RemoteChatLlm:
    """Chat-completions-over-HTTP backend.

    POST {endpoint}/chat/completions with {"model", "messages", "temperature",
    "max_tokens"}; the generated text is read from
    choices[0].message.content. Bearer auth from LLM_API_KEY, base URL from
    the config endpoint or LLM_BASE_URL.
    """

    def __init__(self, config: LlmProviderConfig, *,
                 transport: httpx.BaseTransport | None = None,
                 max_in_flight: int = 4,
                 retry_attempts: int = RETRY_ATTEMPTS,
                 retry_base_delay: float = RETRY_BASE_DELAY) -> None:
        base_url = config.endpoint or os.environ.get(ENV_LLM_BASE_URL)
        if not base_url:
            raise ValidationError(f"remote LLM needs an endpoint (config or {ENV_LLM_BASE_URL})")
        headers = {}
        api_key = os.environ.get(ENV_LLM_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.config = config
        self.model_name = config.model_name
        self._client = httpx.Client(base_url=base_url, headers=headers,
                                    timeout=60.0, transport=transport)
        self._semaphore = threading.Semaphore(max_in_flight)
        self._retry_attempts = retry_attempts
        self._retry_base_delay = retry_base_delay

    def complete(self, system: str, user: str, *, temperature: float,
                 max_tokens: int) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        with self._semaphore:
            body = post_json(self._client, "/chat/completions", payload,
                             attempts=self._retry_attempts,
                             base_delay=self._retry_base_delay)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ContractViolationError(f"malformed chat response: {exc}") from exc
        if not isinstance(content, str):
            raise ContractViolationError("chat response content is not text")
        return content


LlmProvider = ScriptedMockLlm | RemoteChatLlm


def create_llm(config: LlmProviderConfig, *,
               transport: httpx.BaseTransport | None = None) -> LlmProvider:
    if config.backend_kind == BACKEND_SCRIPTED:
        return ScriptedMockLlm(config.script, config.model_name)
    return RemoteChatLlm(config, transport=transport)


@dataclass
class TranscriptLog:
    """Thread-safe append-only record of LLM calls, replayable by the mock."""

    records: list[dict] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def append(self, question_id: str, call_kind: str, prompt: str, response: str) -> None:
        record = {
            "question_id": question_id,
            "call_kind": call_kind,
            "prompt_hash": prompt_fingerprint(prompt),
            "prompt": prompt,
            "response": response,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            self.records.append(record)

    def write_jsonl(self, path: str | Path) -> None:
        with self._lock:
            snapshot = list(self.records)
        with open(path, "w", encoding="utf-8") as handle:
            for record in snapshot:
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_transcript(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records


def script_from_transcript(records: Iterable[Mapping]) -> dict[str, str]:
    """Build a mock script from transcript records. Records carrying a raw
    prompt are re-fingerprinted, so hand-written {"prompt", "response"} pairs
    work too."""
    script: dict[str, str] = {}
    for record in records:
        if "prompt" in record:
            key = prompt_fingerprint(str(record["prompt"]))
        elif "prompt_hash" in record:
            key = str(record["prompt_hash"])
        else:
            raise ValidationError("transcript record lacks prompt and prompt_hash")
        script[key] = str(record["response"])
    return script
