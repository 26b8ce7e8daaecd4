/** Highlight rendering from server-provided character offsets.
 *
 * The UI never re-matches text: spans come straight from the extraction
 * trace, so what the annotator sees is exactly the pipeline's evidence.
 * Malformed offsets are a hard error surfaced by the caller, never a silent
 * partial render.
 */

import type { HighlightSpan } from "./types.js";

export class HighlightError extends Error {}

/** Offsets must lie inside the text, be well ordered, and not overlap. */
export function validateSpans(text: string, spans: HighlightSpan[]): HighlightSpan[] {
  const sorted = [...spans].sort((a, b) => a.char_start - b.char_start);
  let cursor = 0;
  for (const span of sorted) {
    if (
      !Number.isInteger(span.char_start) ||
      !Number.isInteger(span.char_end) ||
      span.char_start < 0 ||
      span.char_end > text.length ||
      span.char_start >= span.char_end
    ) {
      throw new HighlightError(
        `span [${span.char_start}, ${span.char_end}) out of range for text of length ${text.length}`,
      );
    }
    if (span.char_start < cursor) {
      throw new HighlightError(
        `span [${span.char_start}, ${span.char_end}) overlaps the previous span`,
      );
    }
    cursor = span.char_end;
  }
  return sorted;
}

/** Build the report body: plain text nodes with <mark> elements over spans. */
export function renderHighlighted(
  doc: Document,
  text: string,
  spans: HighlightSpan[],
): DocumentFragment {
  const sorted = validateSpans(text, spans);
  const fragment = doc.createDocumentFragment();
  let cursor = 0;
  for (const span of sorted) {
    if (span.char_start > cursor) {
      fragment.appendChild(doc.createTextNode(text.slice(cursor, span.char_start)));
    }
    const mark = doc.createElement("mark");
    mark.className = "highlight";
    mark.textContent = text.slice(span.char_start, span.char_end);
    fragment.appendChild(mark);
    cursor = span.char_end;
  }
  if (cursor < text.length) {
    fragment.appendChild(doc.createTextNode(text.slice(cursor)));
  }
  return fragment;
}
