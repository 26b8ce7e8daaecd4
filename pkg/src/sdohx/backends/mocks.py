"""Deterministic mock backends.

The rule mock answers every prompt kind from the same fixed lexicons the
synthetic generator plants, which makes it an exact oracle over generated
corpora. The noisy variant degrades only the retrieval stage, for
experiments on how much the verification stage recovers.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from typing import Callable, Mapping, Sequence

from ..factors import FactorRegistry, builtin_registry
from ..segmenter import normalize, segment
from ..synth import all_temporal_phrases, normalized_lexicons
from .base import ModelResponse, PromptRequest, request_cache_key

_CONTEXT_RE = re.compile(r"\[CONTEXT\](.*)\[/CONTEXT\]", re.S)
_SENTENCE_RE = re.compile(r"\[SENTENCE\](.*)\[/SENTENCE\]", re.S)
_FACTOR_RE = re.compile(r"\[([^\[\]\n]+)\]((?:.|\n)*)\[/\1\]\s*$")

_KIND_MARKERS = [
    ("find all the sentences", "retrieval"),
    ("Verify if the given sentence", "verification"),
    ("Read the descriptions", "extraction"),
    ("Answer the following questions one by one", "cot"),
    ("Output your reasoning process", "reasoning"),
    ("Read the given context below", "end2end"),
]


class MockEnvelopeError(ValueError):
    """The request does not look like a rendered pipeline prompt."""


def _sniff_kind(system_instruction: str) -> str:
    for marker, kind in _KIND_MARKERS:
        if marker in system_instruction:
            return kind
    raise MockEnvelopeError("cannot determine prompt kind from instruction")


def _factor_name(user_payload: str) -> str:
    match = _FACTOR_RE.search(user_payload)
    if match is None or match.group(1) in ("CONTEXT", "SENTENCE"):
        raise MockEnvelopeError("no factor definition block in payload")
    return match.group(1)


def _block(user_payload: str, pattern: re.Pattern[str], label: str) -> str:
    match = pattern.search(user_payload)
    if match is None:
        raise MockEnvelopeError(f"no {label} block in payload")
    return match.group(1)


class RuleMockBackend:
    """Exact lexicon-based oracle for every prompt kind."""

    backend_id = "rule-mock"

    def __init__(
        self,
        lexicons: Mapping[str, Sequence[str]] | None = None,
        registry: FactorRegistry | None = None,
        backend_id: str | None = None,
    ):
        registry = registry or builtin_registry()
        lexicons = lexicons if lexicons is not None else normalized_lexicons()
        self._phrases_by_name: dict[str, tuple[str, ...]] = {}
        for factor_id, phrases in lexicons.items():
            name = registry[factor_id].name if factor_id in registry else factor_id
            self._phrases_by_name[name] = tuple(normalize(p) for p in phrases)
        self._temporal = all_temporal_phrases()
        self._in_window = [p for p, d in self._temporal.items() if d <= 14]
        if backend_id is not None:
            self.backend_id = backend_id

    def _phrases(self, factor_name: str) -> tuple[str, ...]:
        try:
            return self._phrases_by_name[factor_name]
        except KeyError:
            raise MockEnvelopeError(f"no lexicon for factor named {factor_name!r}") from None

    def _mentions(self, factor_name: str, text: str) -> bool:
        norm = normalize(text)
        return any(p in norm for p in self._phrases(factor_name))

    def _within_window(self, text: str) -> bool:
        norm = normalize(text)
        return any(p in norm for p in self._in_window)

    def _factor_sentences(self, factor_name: str, context: str) -> list[str]:
        return [
            span.text
            for span in segment("ctx", context)
            if self._mentions(factor_name, span.text)
        ]

    def _retrieval_sentences(self, req: PromptRequest, factor: str, context: str) -> list[str]:
        return self._factor_sentences(factor, context)

    def _answer(self, req: PromptRequest) -> str:
        kind = req.kind or _sniff_kind(req.system_instruction)
        payload = req.user_payload
        factor = _factor_name(payload)
        if kind == "retrieval":
            context = _block(payload, _CONTEXT_RE, "CONTEXT")
            sentences = self._retrieval_sentences(req, factor, context)
            return json.dumps({"Relevant": sentences}, ensure_ascii=False)
        if kind == "verification":
            sentence = _block(payload, _SENTENCE_RE, "SENTENCE")
            return json.dumps({"Answer": self._mentions(factor, sentence)})
        if kind == "extraction":
            descriptions = _block(payload, _CONTEXT_RE, "CONTEXT")
            return json.dumps({"Happened within two weeks": self._within_window(descriptions)})
        if kind == "end2end":
            context = _block(payload, _CONTEXT_RE, "CONTEXT")
            value = any(
                self._within_window(s) for s in self._factor_sentences(factor, context)
            )
            return json.dumps({"Happened within two weeks": value})
        if kind == "cot":
            context = _block(payload, _CONTEXT_RE, "CONTEXT")
            sentences = self._factor_sentences(factor, context)
            mentioned = bool(sentences)
            within = any(self._within_window(s) for s in sentences)
            answer: dict[str, object] = {
                "Mentioned or Not": mentioned,
                "Within Two Weeks or Not": within,
            }
            if mentioned:
                answer["Relevant Sentences"] = sentences
            return json.dumps(answer, ensure_ascii=False)
        if kind == "reasoning":
            context = _block(payload, _CONTEXT_RE, "CONTEXT")
            sentences = self._factor_sentences(factor, context)
            value = any(self._within_window(s) for s in sentences)
            evidence = (
                "I found these mentions: " + " ".join(sentences)
                if sentences
                else "I found no mention of the factor."
            )
            return (
                f"Let me work through the report looking for '{factor}'. {evidence} "
                f"Checking the stated timing against the two-week window. "
                f"Final answer: {'True' if value else 'False'}"
            )
        raise MockEnvelopeError(f"unsupported prompt kind {kind!r}")

    def complete(self, req: PromptRequest) -> ModelResponse:
        return ModelResponse(
            raw_text=self._answer(req), latency_ms=0, backend_id=self.backend_id, attempts=1
        )


class NoisyRetrieverBackend(RuleMockBackend):
    """Rule mock whose retrieval stage drops true hits and injects noise.

    Noise is a pure function of (seed, request), so results do not depend on
    call order or parallelism.
    """

    def __init__(
        self,
        seed: int = 0,
        drop_rate: float = 0.2,
        inject_rate: float = 0.3,
        lexicons: Mapping[str, Sequence[str]] | None = None,
        registry: FactorRegistry | None = None,
    ):
        super().__init__(lexicons=lexicons, registry=registry, backend_id="noisy-mock")
        if not 0 <= drop_rate < 1 or not 0 <= inject_rate < 1:
            raise ValueError("drop_rate and inject_rate must be in [0,1)")
        self._seed = seed
        self._drop_rate = drop_rate
        self._inject_rate = inject_rate

    def _request_rng(self, req: PromptRequest) -> random.Random:
        digest = hashlib.sha256(
            f"{self._seed}|{request_cache_key(req)}".encode("utf-8")
        ).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _retrieval_sentences(self, req: PromptRequest, factor: str, context: str) -> list[str]:
        rng = self._request_rng(req)
        kept = []
        for span in segment("ctx", context):
            if self._mentions(factor, span.text):
                if rng.random() >= self._drop_rate:
                    kept.append(span.text)
            elif rng.random() < self._inject_rate:
                kept.append(span.text)
        return kept


class StaticBackend:
    """Echoes one fixed response; handy for fixture-driven tests."""

    def __init__(self, raw_text: str, backend_id: str = "mock"):
        self.raw_text = raw_text
        self.backend_id = backend_id

    def complete(self, req: PromptRequest) -> ModelResponse:
        return ModelResponse(raw_text=self.raw_text, latency_ms=0, backend_id=self.backend_id)


class FunctionBackend:
    """Adapter turning a plain function of the request into a backend."""

    def __init__(self, fn: Callable[[PromptRequest], str], backend_id: str = "function-mock"):
        self._fn = fn
        self.backend_id = backend_id

    def complete(self, req: PromptRequest) -> ModelResponse:
        return ModelResponse(raw_text=self._fn(req), latency_ms=0, backend_id=self.backend_id)
