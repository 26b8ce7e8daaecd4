"""Chat-completions HTTP backend.

Speaks the de-facto ``/chat/completions`` JSON shape so any compatible
server (hosted or locally served) plugs in unchanged. Transport failures,
429s, and 5xx responses are retried with exponential backoff and jitter;
other 4xx responses fail immediately.
"""

from __future__ import annotations

import os
import random
import time

import httpx

from .base import (
    ModelResponse,
    PromptRequest,
    RateLimiter,
    RequestError,
    TokenUsage,
    TransportError,
)

ENV_API_KEY = "MODEL_API_KEY"
ENV_API_BASE = "MODEL_API_BASE"
ENV_MODEL_NAME = "MODEL_NAME"

_RETRYABLE_STATUS = frozenset([429]) | frozenset(range(500, 600))


class RemoteBackend:
    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 4,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        rate_limiter: RateLimiter | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
        jitter_rng: random.Random | None = None,
    ):
        base_url = base_url or os.environ.get(ENV_API_BASE)
        if not base_url:
            raise ValueError(f"no base URL: pass base_url or set {ENV_API_BASE}")
        self.model = model or os.environ.get(ENV_MODEL_NAME)
        if not self.model:
            raise ValueError(f"no model name: pass model or set {ENV_MODEL_NAME}")
        self.backend_id = f"remote:{self.model}"
        self._api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._rate_limiter = rate_limiter
        self._sleep = sleep
        self._jitter = jitter_rng or random.Random()
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), timeout=timeout, headers=headers, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def _backoff(self, attempt: int) -> float:
        delay = min(self._backoff_cap, self._backoff_base * (2**attempt))
        return delay * (0.5 + self._jitter.random())

    def complete(self, req: PromptRequest) -> ModelResponse:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_instruction},
                {"role": "user", "content": req.user_payload},
            ],
            "temperature": req.decode_params.temperature,
            "max_tokens": req.decode_params.max_output_tokens,
        }
        attempts = 0
        started = time.monotonic()
        last_failure = ""
        while attempts <= self._max_retries:
            if self._rate_limiter is not None:
                self._rate_limiter.acquire()
            attempts += 1
            try:
                response = self._client.post("/chat/completions", json=body)
            except httpx.HTTPError as exc:
                last_failure = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    return self._to_model_response(response, req, attempts, started)
                if response.status_code not in _RETRYABLE_STATUS:
                    raise RequestError(
                        f"request failed with HTTP {response.status_code}: {response.text[:200]}",
                        request_tag=req.request_tag,
                        status_code=response.status_code,
                    )
                last_failure = f"HTTP {response.status_code}"
            if attempts <= self._max_retries:
                self._sleep(self._backoff(attempts - 1))
        raise TransportError(
            f"exhausted {self._max_retries} retries ({last_failure})",
            request_tag=req.request_tag,
        )

    def _to_model_response(
        self, response: httpx.Response, req: PromptRequest, attempts: int, started: float
    ) -> ModelResponse:
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise RequestError(
                f"malformed completion response: {exc}", request_tag=req.request_tag
            ) from exc
        usage = None
        if isinstance(payload.get("usage"), dict):
            u = payload["usage"]
            if "prompt_tokens" in u and "completion_tokens" in u:
                usage = TokenUsage(int(u["prompt_tokens"]), int(u["completion_tokens"]))
        return ModelResponse(
            raw_text=content if isinstance(content, str) else "",
            latency_ms=int((time.monotonic() - started) * 1000),
            backend_id=self.backend_id,
            token_usage=usage,
            attempts=attempts,
        )
