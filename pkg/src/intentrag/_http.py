"""Small shared HTTP helper: JSON POST with bounded retries and backoff."""

from __future__ import annotations

import time
from typing import Callable

import httpx

from .errors import TransportError

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.5

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


def post_json(client: httpx.Client, path: str, payload: dict, *,
              attempts: int = RETRY_ATTEMPTS,
              base_delay: float = RETRY_BASE_DELAY,
              sleep: Callable[[float], None] = time.sleep) -> dict:
    """POST ``payload`` to ``path``, retrying transient failures.

    Retries transport errors and 429/5xx responses up to ``attempts`` times
    with exponential backoff starting at ``base_delay`` seconds, then raises
    TransportError.
    """
    last_error: Exception | None = None
    for attempt in range(attempts):
        if attempt > 0:
            sleep(base_delay * (2 ** (attempt - 1)))
        try:
            response = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            last_error = exc
            continue
        if response.status_code in _RETRYABLE_STATUS:
            last_error = TransportError(f"server answered {response.status_code}")
            continue
        response.raise_for_status()
        return response.json()
    raise TransportError(f"request to {path} failed after {attempts} attempts: {last_error}")
