"""Backend-facing request/response types and shared infrastructure."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable


class BackendError(RuntimeError):
    """Base class for completion failures; carries the request tag."""

    def __init__(self, message: str, request_tag: str = ""):
        super().__init__(message)
        self.request_tag = request_tag


class TransportError(BackendError):
    """Exhausted retries on transport failures, 429s, or 5xx responses."""


class RequestError(BackendError):
    """Non-retryable request failure (4xx other than 429)."""

    def __init__(self, message: str, request_tag: str = "", status_code: int | None = None):
        super().__init__(message, request_tag)
        self.status_code = status_code


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True)
class PromptRequest:
    """One rendered prompt, split into system instruction and user payload.

    ``kind`` and ``expected_payload`` are attached by the prompt renderer so
    downstream parsing (and the rule mock) need not sniff the text.
    """

    system_instruction: str
    user_payload: str
    decode_params: DecodeParams = field(default_factory=DecodeParams)
    request_tag: str = ""
    kind: str | None = None
    expected_payload: object | None = None

    def __post_init__(self) -> None:
        if not self.user_payload:
            raise ValueError("user_payload must be non-empty")


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    latency_ms: int = 0
    backend_id: str = ""
    token_usage: TokenUsage | None = None
    attempts: int = 1

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be nonnegative")


@runtime_checkable
class Backend(Protocol):
    """Anything that can answer a PromptRequest. Must be safe for concurrent use."""

    backend_id: str

    def complete(self, req: PromptRequest) -> ModelResponse: ...


def request_cache_key(req: PromptRequest) -> str:
    """Content hash identifying a request: prompt text plus decode params.

    The request tag is deliberately excluded so identical prompts share one
    cache entry regardless of which task issued them.
    """
    canonical = json.dumps(
        {
            "system_instruction": req.system_instruction,
            "user_payload": req.user_payload,
            "temperature": req.decode_params.temperature,
            "max_output_tokens": req.decode_params.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class RateLimiter:
    """Token bucket shared across concurrent tasks; ``acquire`` blocks."""

    def __init__(self, requests_per_minute: float, clock=time.monotonic, sleep=time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self._rate = requests_per_minute / 60.0
        self._capacity = max(1.0, requests_per_minute / 60.0)
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)
