"""Record/replay cache: content-addressed store of raw model responses.

A cache entry is a pair of files named by the request hash: ``<key>.txt``
holds the raw response text and ``<key>.json`` a sidecar with decode params,
the inner backend id, latency, and a timestamp. Hits reproduce the recorded
response exactly, so warm and cold runs emit identical traces.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from .base import Backend, ModelResponse, PromptRequest, request_cache_key


class ReplayCacheError(RuntimeError):
    """Corrupt cache entry or a miss with no inner backend; names the key."""

    def __init__(self, message: str, key: str):
        super().__init__(message)
        self.key = key


class ReplayBackend:
    def __init__(self, cache_dir: str | Path, inner: Backend | None = None):
        self._dir = Path(cache_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._inner = inner
        inner_id = inner.backend_id if inner is not None else "none"
        self.backend_id = f"replay:{inner_id}"
        self._write_lock = threading.Lock()

    def _paths(self, key: str) -> tuple[Path, Path]:
        return self._dir / f"{key}.txt", self._dir / f"{key}.json"

    def complete(self, req: PromptRequest) -> ModelResponse:
        key = request_cache_key(req)
        text_path, meta_path = self._paths(key)
        if text_path.exists() or meta_path.exists():
            return self._load(key, text_path, meta_path)
        if self._inner is None:
            raise ReplayCacheError(f"cache miss for {key} and no inner backend", key)
        response = self._inner.complete(req)
        self._store(key, req, response)
        return ModelResponse(
            raw_text=response.raw_text,
            latency_ms=response.latency_ms,
            backend_id=self.backend_id,
            token_usage=response.token_usage,
            attempts=response.attempts,
        )

    def _load(self, key: str, text_path: Path, meta_path: Path) -> ModelResponse:
        try:
            raw_text = text_path.read_text(encoding="utf-8")
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            latency = int(meta["latency_ms"])
            attempts = int(meta["attempts"])
            inner_id = str(meta["inner_backend_id"])
        except (OSError, ValueError, KeyError) as exc:
            raise ReplayCacheError(f"corrupt cache entry {key}: {exc}", key) from exc
        return ModelResponse(
            raw_text=raw_text,
            latency_ms=latency,
            backend_id=f"replay:{inner_id}",
            attempts=attempts,
        )

    def _store(self, key: str, req: PromptRequest, response: ModelResponse) -> None:
        text_path, meta_path = self._paths(key)
        meta = {
            "decode_params": {
                "temperature": req.decode_params.temperature,
                "max_output_tokens": req.decode_params.max_output_tokens,
            },
            "inner_backend_id": response.backend_id,
            "latency_ms": response.latency_ms,
            "attempts": response.attempts,
            "timestamp": time.time(),
        }
        with self._write_lock:
            tmp_text = text_path.with_suffix(".txt.tmp")
            tmp_meta = meta_path.with_suffix(".json.tmp")
            tmp_text.write_text(response.raw_text, encoding="utf-8")
            tmp_meta.write_text(json.dumps(meta, indent=2), encoding="utf-8")
            tmp_text.rename(text_path)
            tmp_meta.rename(meta_path)
