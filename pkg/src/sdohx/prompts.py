"""Prompt templates for all six prompting modes.

Template bodies live as text fixtures under ``data/prompts`` and are loaded
verbatim; rendering is a single-pass placeholder substitution so bound values
are never re-scanned for placeholders. Placeholder names match the
transcription source exactly for auditability.

The flat template maps onto a chat request as follows: the ``[INST]``-block
becomes the system instruction and everything after the ``Here is your
input:`` marker line becomes the user payload.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping

from .backends.base import DecodeParams, PromptRequest
from .backends.parse import (
    BOOL_ANSWER,
    BOOL_TWO_WEEKS,
    LIST_RELEVANT,
    TWO_FIELD,
    PayloadSpec,
)

KINDS = ("retrieval", "verification", "extraction", "end2end", "cot", "reasoning")

_INPUT_MARKER = "Here is your input: \n"

_ALLOWED_PLACEHOLDERS: dict[str, frozenset[str]] = {
    "retrieval": frozenset(["TARGET_SOCIAL_FACTOR", "FACTOR_DEFINITION", "INPUT_REPORT"]),
    "verification": frozenset(["TARGET_SOCIAL_FACTOR", "FACTOR_DEFINITION", "TARGET_SENTENCE"]),
    "extraction": frozenset(
        ["TARGET_SOCIAL_FACTOR", "FACTOR_DEFINITION", "RELEVANT_DESCRIPTIONS"]
    ),
    "end2end": frozenset(["TARGET_SOCIAL_FACTOR", "FACTOR_DEFINITION", "INPUT_REPORT"]),
    "cot": frozenset(["TARGET_SOCIAL_FACTOR", "FACTOR_DEFINITION", "INPUT_REPORT"]),
    "reasoning": frozenset(["TARGET_SOCIAL_FACTOR", "FACTOR_DEFINITION", "INPUT_REPORT"]),
}

EXPECTED_PAYLOADS: dict[str, PayloadSpec | None] = {
    "retrieval": LIST_RELEVANT,
    "verification": BOOL_ANSWER,
    "extraction": BOOL_TWO_WEEKS,
    "end2end": BOOL_TWO_WEEKS,
    "cot": TWO_FIELD,
    "reasoning": None,  # free-form reasoning; verdict comes from a tail scan
}

_PLACEHOLDER_RE = re.compile(r"\{([A-Z][A-Z_]*)\}")


class PromptError(ValueError):
    """Unknown kind, missing binding, or malformed template."""


@dataclass(frozen=True)
class PromptTemplate:
    kind: str
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER_RE.findall(self.body))

    def __post_init__(self) -> None:
        if self.kind not in _ALLOWED_PLACEHOLDERS:
            raise PromptError(f"unknown prompt kind {self.kind!r}")
        stray = self.placeholders - _ALLOWED_PLACEHOLDERS[self.kind]
        if stray:
            raise PromptError(f"{self.kind}: placeholders not allowed: {sorted(stray)}")
        if _INPUT_MARKER not in self.body:
            raise PromptError(f"{self.kind}: template lacks the input marker line")


def _load_templates() -> dict[str, PromptTemplate]:
    templates = {}
    for kind in KINDS:
        text = (
            resources.files("sdohx.data.prompts").joinpath(f"{kind}.txt").read_text("utf-8")
        )
        templates[kind] = PromptTemplate(kind=kind, body=text.removesuffix("\n"))
    return templates


_TEMPLATES: dict[str, PromptTemplate] | None = None


def get_template(kind: str) -> PromptTemplate:
    global _TEMPLATES
    if _TEMPLATES is None:
        _TEMPLATES = _load_templates()
    if kind not in _TEMPLATES:
        raise PromptError(f"unknown prompt kind {kind!r}")
    return _TEMPLATES[kind]


def _substitute(text: str, kind: str, bindings: Mapping[str, str]) -> str:
    def repl(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in bindings:
            raise PromptError(f"{kind}: no binding for placeholder {name!r}")
        return bindings[name]

    return _PLACEHOLDER_RE.sub(repl, text)


def render_text(kind: str, bindings: Mapping[str, str]) -> str:
    """The fully substituted flat prompt, byte-equal to the template fixture
    with placeholders replaced."""
    template = get_template(kind)
    _check_bindings(template, bindings)
    return _substitute(template.body, kind, bindings)


def _check_bindings(template: PromptTemplate, bindings: Mapping[str, str]) -> None:
    missing = template.placeholders - set(bindings)
    if missing:
        raise PromptError(f"{template.kind}: missing bindings: {sorted(missing)}")
    definition = bindings.get("FACTOR_DEFINITION")
    if definition is not None and not definition.strip():
        raise PromptError(f"{template.kind}: factor definition must be non-empty")


def render(
    kind: str,
    bindings: Mapping[str, str],
    decode_params: DecodeParams | None = None,
    request_tag: str = "",
) -> PromptRequest:
    """Render a chat request for ``kind`` with every placeholder bound."""
    template = get_template(kind)
    _check_bindings(template, bindings)
    marker_at = template.body.index(_INPUT_MARKER)
    instruction_part = template.body[:marker_at]
    input_part = template.body[marker_at + len(_INPUT_MARKER) :]
    return PromptRequest(
        system_instruction=_substitute(instruction_part, kind, bindings).rstrip(),
        user_payload=_substitute(input_part, kind, bindings),
        decode_params=decode_params or DecodeParams(),
        request_tag=request_tag or kind,
        kind=kind,
        expected_payload=EXPECTED_PAYLOADS[kind],
    )


def with_tag(req: PromptRequest, request_tag: str) -> PromptRequest:
    return replace(req, request_tag=request_tag)
