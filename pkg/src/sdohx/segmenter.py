"""Rule-based sentence segmentation and text normalization.

Gold sentence indices are defined against this segmentation, so the rules are
frozen: extending the abbreviation list is a breaking change to any stored
gold annotations.

Splitting rules:

* ``.``, ``?`` or ``!`` ends a sentence when followed by whitespace and an
  uppercase letter, or at end of text.
* A ``.`` does not split after a known abbreviation (``ABBREVIATIONS``) or
  between two digits (decimals such as ``3.5``).
* A newline always closes the current sentence, whether or not the line ends
  with terminal punctuation.
* Whitespace-only candidates are dropped; candidates shorter than 2
  characters after trimming are merged into the following sentence (into the
  preceding one when nothing follows).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Tokens after which a '.' is not a sentence boundary. Case-sensitive.
ABBREVIATIONS = frozenset(
    ["Mr", "Mrs", "Ms", "Dr", "Jr", "Sr", "St", "vs", "etc", "e.g", "i.e", "No", "approx"]
)

_TERMINALS = ".?!"
_MIN_SENTENCE_CHARS = 2

_QUOTE_TRANSLATION = str.maketrans({"‘": "'", "’": "'", "“": '"', "”": '"'})

_ABBREV_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z.]*$")


@dataclass(frozen=True)
class SentenceSpan:
    """One sentence of a report, addressed by its position in the source text.

    ``text`` is exactly ``source[char_start:char_end]``; trimming is folded
    into the offsets so spans never start or end on whitespace.
    """

    report_tag: str
    index: int
    text: str
    char_start: int
    char_end: int


def _is_abbreviation(text: str, dot_index: int) -> bool:
    m = _ABBREV_TOKEN_RE.search(text, 0, dot_index)
    if m is None:
        return False
    return m.group(0) in ABBREVIATIONS


def _is_decimal(text: str, dot_index: int) -> bool:
    return (
        dot_index > 0
        and dot_index + 1 < len(text)
        and text[dot_index - 1].isdigit()
        and text[dot_index + 1].isdigit()
    )


def _break_positions(text: str) -> list[int]:
    """Indices at which the current sentence closes (exclusive end)."""
    breaks: list[int] = []
    n = len(text)
    i = 0
    while i < n:
        ch = text[i]
        if ch == "\n":
            breaks.append(i)
            i += 1
            continue
        if ch not in _TERMINALS:
            i += 1
            continue
        run_end = i
        while run_end < n and text[run_end] in _TERMINALS:
            run_end += 1
        single_dot = run_end - i == 1 and ch == "."
        if single_dot and (_is_decimal(text, i) or _is_abbreviation(text, i)):
            i = run_end
            continue
        if run_end == n:
            breaks.append(run_end)
            i = run_end
            continue
        j = run_end
        while j < n and text[j] in " \t":
            j += 1
        if j < n and text[j] == "\n":
            # The newline handler will close the sentence.
            i = run_end
            continue
        if j > run_end and j < n and text[j].isupper():
            breaks.append(run_end)
        i = run_end
    if not breaks or breaks[-1] < n:
        breaks.append(n)
    return breaks


def _trim_bounds(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def segment(report_tag: str, text: str) -> list[SentenceSpan]:
    """Split ``text`` into sentence spans. Deterministic and total."""
    if not text or not text.strip():
        return []
    bounds: list[tuple[int, int]] = []
    prev = 0
    for brk in _break_positions(text):
        start, end = _trim_bounds(text, prev, brk)
        prev = brk
        if end > start:
            bounds.append((start, end))
    # Merge degenerate fragments (single punctuation, lone characters) into
    # the following sentence; a trailing fragment merges backwards instead.
    merged: list[tuple[int, int]] = []
    pending_start: int | None = None
    for start, end in bounds:
        if pending_start is not None:
            start = pending_start
            pending_start = None
        if end - start < _MIN_SENTENCE_CHARS:
            pending_start = start
            continue
        merged.append((start, end))
    if pending_start is not None:
        if merged:
            last_start, _ = merged[-1]
            tail_end = bounds[-1][1]
            merged[-1] = (last_start, tail_end)
        else:
            merged.append((pending_start, bounds[-1][1]))
    return [
        SentenceSpan(
            report_tag=report_tag,
            index=idx,
            text=text[start:end],
            char_start=start,
            char_end=end,
        )
        for idx, (start, end) in enumerate(merged)
    ]


def normalize(text: str) -> str:
    """Canonical form used for sentence matching.

    Lowercase, straight quotes, single internal spaces, no surrounding
    whitespace, no trailing terminal punctuation. Idempotent and
    length-nonincreasing.
    """
    text = text.translate(_QUOTE_TRANSLATION).lower()
    text = " ".join(text.split())
    return text.rstrip(".?! ")
