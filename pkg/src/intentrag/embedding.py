"""Text-to-vector providers and the vector arithmetic the rest of the pipeline uses.

Two backends implement the same contract: a remote embeddings-over-HTTP
backend and a deterministic offline mock. Every provider L2-normalizes its
output at the boundary, so downstream code can treat dot product as cosine.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import httpx
import numpy as np

from ._http import RETRY_ATTEMPTS, RETRY_BASE_DELAY, post_json
from .errors import (
    ContractViolationError,
    DimensionMismatchError,
    ValidationError,
)

BACKEND_REMOTE = "remote_http"
BACKEND_MOCK = "deterministic_mock"

ENV_EMBED_API_KEY = "EMBED_API_KEY"
ENV_EMBED_BASE_URL = "EMBED_BASE_URL"

_TOKEN_RE = re.compile(r"\w+")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """An immutable dense vector. Values are float64 and always finite."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("embedding vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding vector contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def to_list(self) -> list[float]:
        return self.values.tolist()


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    backend_kind: str = BACKEND_MOCK
    model_name: str = "token-hash-bow"
    dim: int = 256
    endpoint: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.backend_kind not in (BACKEND_REMOTE, BACKEND_MOCK):
            raise ValidationError(f"unknown embedding backend {self.backend_kind!r}")
        if self.dim < 2:
            raise ValidationError("embedding dim must be >= 2")

    def to_dict(self) -> dict:
        return {
            "backend_kind": self.backend_kind,
            "model_name": self.model_name,
            "dim": self.dim,
            "endpoint": self.endpoint,
            "seed": self.seed,
        }


def token_slot(token: str, dim: int, seed: int, salt: int = 0) -> tuple[int, int]:
    """Map a token to a (position, sign) pair.

    Uses blake2b so the mapping is bit-stable across runs, platforms, and
    Python processes (the built-in ``hash`` is randomized and unusable here).
    """
    digest = hashlib.blake2b(f"{seed}:{salt}:{token}".encode("utf-8"),
                             digest_size=16).digest()
    position = int.from_bytes(digest[:8], "little") % dim
    sign = 1 if digest[8] & 1 else -1
    return position, sign


def mock_embed(text: str, dim: int, seed: int) -> EmbeddingVector:
    """Deterministic bag-of-words embedding: signed token hashing, L2-normalized.

    Texts sharing more tokens land closer in cosine, which is what the
    planted-corpus tests rely on. Exact sign cancellation (all accumulated
    mass summing to zero) is resolved by deterministically re-hashing with a
    bumped salt, so a provider never emits the all-zero vector.
    """
    if dim < 2:
        raise ValidationError("dim must be >= 2")
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise ValidationError("cannot embed text with no tokens")
    counts = Counter(tokens)
    for salt in range(8):
        vec = np.zeros(dim, dtype=np.float64)
        for token, count in counts.items():
            position, sign = token_slot(token, dim, seed, salt)
            vec[position] += sign * count
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            return EmbeddingVector(vec / norm)
    raise ValidationError("token hashing degenerated to the zero vector")


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"cosine on dims {a.dim} vs {b.dim}")
    norm_a = float(np.linalg.norm(a.values))
    norm_b = float(np.linalg.norm(b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValidationError("cosine similarity is undefined for the zero vector")
    return float(np.dot(a.values, b.values) / (norm_a * norm_b))


def _validate_texts(texts: Sequence[str]) -> None:
    if not texts:
        raise ValidationError("texts must be non-empty")
    for i, text in enumerate(texts):
        if not text.strip():
            raise ValidationError(f"text at position {i} is empty after trim")


class DeterministicMockEmbedder:
    """Offline provider: pure function of (text, dim, seed)."""

    def __init__(self, config: EmbeddingProviderConfig) -> None:
        self.config = config

    @property
    def dim(self) -> int:
        return self.config.dim

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _validate_texts(texts)
        return [mock_embed(text, self.config.dim, self.config.seed) for text in texts]


class RemoteEmbedder:
    """Embeddings-over-HTTP provider.

    Wire protocol: POST {endpoint}/embeddings with {"model": str,
    "input": [str]}; the response carries one list of floats per input, in
    order, as {"data": [{"embedding": [...]}, ...]}. Bearer auth comes from
    EMBED_API_KEY, the base URL from the config endpoint or EMBED_BASE_URL.
    """

    def __init__(self, config: EmbeddingProviderConfig, *,
                 transport: httpx.BaseTransport | None = None,
                 max_in_flight: int = 8,
                 retry_attempts: int = RETRY_ATTEMPTS,
                 retry_base_delay: float = RETRY_BASE_DELAY) -> None:
        base_url = config.endpoint or os.environ.get(ENV_EMBED_BASE_URL)
        if not base_url:
            raise ValidationError("remote embedder needs an endpoint "
                                  f"(config or {ENV_EMBED_BASE_URL})")
        headers = {}
        api_key = os.environ.get(ENV_EMBED_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.config = config
        self._client = httpx.Client(base_url=base_url, headers=headers,
                                    timeout=30.0, transport=transport)
        self._semaphore = threading.Semaphore(max_in_flight)
        self._retry_attempts = retry_attempts
        self._retry_base_delay = retry_base_delay

    @property
    def dim(self) -> int:
        return self.config.dim

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _validate_texts(texts)
        payload = {"model": self.config.model_name, "input": list(texts)}
        with self._semaphore:
            body = post_json(self._client, "/embeddings", payload,
                             attempts=self._retry_attempts,
                             base_delay=self._retry_base_delay)
        rows = body.get("data")
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise ContractViolationError(
                f"backend returned {len(rows) if isinstance(rows, list) else 'no'} "
                f"embeddings for {len(texts)} inputs")
        vectors = []
        for i, row in enumerate(rows):
            values = np.asarray(row.get("embedding", row if isinstance(row, list) else None),
                                dtype=np.float64)
            if values.ndim != 1 or values.shape[0] != self.config.dim:
                raise ContractViolationError(
                    f"embedding {i} has dimension {values.shape} "
                    f"but config says {self.config.dim}")
            norm = float(np.linalg.norm(values))
            if norm == 0.0 or not np.all(np.isfinite(values)):
                raise ContractViolationError(f"embedding {i} is zero or non-finite")
            vectors.append(EmbeddingVector(values / norm))
        return vectors


EmbeddingProvider = DeterministicMockEmbedder | RemoteEmbedder


def create_embedder(config: EmbeddingProviderConfig, *,
                    transport: httpx.BaseTransport | None = None) -> EmbeddingProvider:
    if config.backend_kind == BACKEND_MOCK:
        return DeterministicMockEmbedder(config)
    return RemoteEmbedder(config, transport=transport)


def embed_batch(provider: EmbeddingProvider, texts: Sequence[str]) -> list[EmbeddingVector]:
    """Embed texts in order; output vectors are L2-normalized, one per input."""
    return provider.embed_batch(texts)
