"""Structured-output parsing: recover typed answers from raw model text.

Models wrap their JSON payloads in code fences, prose, and inconsistent key
casing; the extraction pipeline here is deliberately forgiving about the
envelope and deliberately strict about the values. Anything outside the
fixed boolean encodings is a hard coercion error, never a silent default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal


class PayloadError(ValueError):
    """Base parse failure; keeps the raw text for the trace."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class PayloadParseError(PayloadError):
    """No balanced, parseable JSON object in the response."""


class MissingKeyError(PayloadError):
    """The expected key is absent from the payload."""


class CoercionError(PayloadError):
    """A present value cannot be coerced to the expected type."""


@dataclass(frozen=True)
class PayloadSpec:
    kind: Literal["bool", "list", "two_field"]
    key: str | None = None


BOOL_ANSWER = PayloadSpec("bool", "Answer")
BOOL_TWO_WEEKS = PayloadSpec("bool", "Happened within two weeks")
LIST_RELEVANT = PayloadSpec("list", "Relevant")
TWO_FIELD = PayloadSpec("two_field")

MENTIONED_KEY = "Mentioned or Not"
WITHIN_TWO_WEEKS_KEY = "Within Two Weeks or Not"


@dataclass(frozen=True)
class BoolAnswer:
    key: str
    value: bool


@dataclass(frozen=True)
class SentenceList:
    key: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class TwoField:
    mentioned: bool
    within_two_weeks: bool | None


ParsedPayload = BoolAnswer | SentenceList | TwoField

_TRUE_WORDS = frozenset(["true", "yes"])
_FALSE_WORDS = frozenset(["false", "no"])


def _scan_balanced(text: str, start: int) -> str | None:
    """Return the balanced {...} starting at ``start``, honoring JSON strings."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def first_json_object(raw_text: str) -> dict | None:
    """First balanced JSON object in the text that parses, or None."""
    pos = raw_text.find("{")
    while pos != -1:
        candidate = _scan_balanced(raw_text, pos)
        if candidate is not None:
            try:
                obj = json.loads(candidate)
            except json.JSONDecodeError:
                obj = None
            if isinstance(obj, dict):
                return obj
        pos = raw_text.find("{", pos + 1)
    return None


def _normalize_key(key: str) -> str:
    return key.strip().strip("\"'`").strip().lower()


def _coerce_bool(value: object, key: str, raw_text: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        word = value.strip().strip("\"'`").strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
    raise CoercionError(f"key {key!r}: cannot coerce {value!r} to a boolean", raw_text)


def _coerce_list(value: object, key: str, raw_text: str) -> tuple[str, ...]:
    if isinstance(value, str):
        return (value,)
    if isinstance(value, list):
        for item in value:
            if not isinstance(item, str):
                raise CoercionError(
                    f"key {key!r}: list items must be strings, got {item!r}", raw_text
                )
        return tuple(value)
    raise CoercionError(f"key {key!r}: cannot coerce {value!r} to a sentence list", raw_text)


def parse_payload(raw_text: str, expected: PayloadSpec) -> ParsedPayload:
    """Extract the typed answer demanded by ``expected`` from raw model text.

    Envelope handling: prose and code fences around the payload are ignored
    (the first balanced JSON object wins) and keys match case-insensitively,
    ignoring surrounding quotes and backticks.
    """
    obj = first_json_object(raw_text)
    if obj is None:
        raise PayloadParseError("no balanced JSON object in response", raw_text)
    by_norm_key = {_normalize_key(k): v for k, v in obj.items()}

    if expected.kind == "bool":
        assert expected.key is not None
        norm = _normalize_key(expected.key)
        if norm not in by_norm_key:
            raise MissingKeyError(f"expected key {expected.key!r} not present", raw_text)
        return BoolAnswer(expected.key, _coerce_bool(by_norm_key[norm], expected.key, raw_text))

    if expected.kind == "list":
        assert expected.key is not None
        norm = _normalize_key(expected.key)
        if norm not in by_norm_key:
            raise MissingKeyError(f"expected key {expected.key!r} not present", raw_text)
        return SentenceList(expected.key, _coerce_list(by_norm_key[norm], expected.key, raw_text))

    if expected.kind == "two_field":
        mentioned_norm = _normalize_key(MENTIONED_KEY)
        within_norm = _normalize_key(WITHIN_TWO_WEEKS_KEY)
        if mentioned_norm not in by_norm_key:
            raise MissingKeyError(f"expected key {MENTIONED_KEY!r} not present", raw_text)
        mentioned = _coerce_bool(by_norm_key[mentioned_norm], MENTIONED_KEY, raw_text)
        if within_norm not in by_norm_key:
            # The prompt tells the model to stop after answering False at
            # step 1, so a lone negative first field is a complete answer.
            if not mentioned:
                return TwoField(mentioned=False, within_two_weeks=None)
            raise MissingKeyError(f"expected key {WITHIN_TWO_WEEKS_KEY!r} not present", raw_text)
        within = _coerce_bool(by_norm_key[within_norm], WITHIN_TWO_WEEKS_KEY, raw_text)
        return TwoField(mentioned=mentioned, within_two_weeks=within)

    raise ValueError(f"unknown payload kind {expected.kind!r}")
