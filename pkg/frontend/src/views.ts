/** DOM rendering for the annotation screens. */

import { HighlightError, renderHighlighted } from "./highlight.js";
import type { HighlightSpan, ItemView } from "./types.js";

export interface ItemScreenHandles {
  root: HTMLElement;
  trueButton: HTMLButtonElement;
  falseButton: HTMLButtonElement;
  /** Set when highlight offsets were malformed; decisions are disabled. */
  renderError: string | null;
}

function reportPanel(
  doc: Document,
  title: string,
  text: string,
  spans: HighlightSpan[],
): HTMLElement {
  const panel = doc.createElement("section");
  panel.className = "report";
  panel.dataset.report = title.toLowerCase();
  const heading = doc.createElement("h3");
  heading.textContent = title;
  panel.appendChild(heading);
  const body = doc.createElement("p");
  body.className = "report-body";
  if (text) {
    body.appendChild(renderHighlighted(doc, text, spans));
  } else {
    body.textContent = "(no report on file)";
    body.className += " report-empty";
  }
  panel.appendChild(body);
  return panel;
}

export function renderItemScreen(
  doc: Document,
  container: HTMLElement,
  item: ItemView,
): ItemScreenHandles {
  container.textContent = "";
  const root = doc.createElement("div");
  root.className = "item-screen";
  root.dataset.arm = item.arm;

  const progress = doc.createElement("div");
  progress.className = "progress";
  progress.textContent = `Item ${item.progress.done + 1} of ${item.progress.total}`;
  root.appendChild(progress);

  const factor = doc.createElement("aside");
  factor.className = "factor-panel";
  const name = doc.createElement("h2");
  name.textContent = item.factor_name;
  const definition = doc.createElement("p");
  definition.className = "factor-definition";
  definition.textContent = item.factor_definition;
  factor.appendChild(name);
  factor.appendChild(definition);
  root.appendChild(factor);

  let renderError: string | null = null;
  try {
    root.appendChild(
      reportPanel(doc, "CME", item.cme_report,
        item.highlights.filter((h) => h.report === "cme")),
    );
    root.appendChild(
      reportPanel(doc, "LE", item.le_report,
        item.highlights.filter((h) => h.report === "le")),
    );
  } catch (err) {
    if (!(err instanceof HighlightError)) {
      throw err;
    }
    renderError = err.message;
    const banner = doc.createElement("div");
    banner.className = "banner banner-error";
    banner.textContent = `Cannot display this item safely: ${err.message}`;
    root.appendChild(banner);
  }

  const question = doc.createElement("p");
  question.className = "decision-question";
  question.textContent =
    `Did "${item.factor_name}" occur within the two weeks preceding the incident?`;
  root.appendChild(question);

  const controls = doc.createElement("div");
  controls.className = "decision-buttons";
  const trueButton = doc.createElement("button");
  trueButton.textContent = "True";
  trueButton.dataset.decision = "true";
  const falseButton = doc.createElement("button");
  falseButton.textContent = "False";
  falseButton.dataset.decision = "false";
  if (renderError !== null) {
    trueButton.disabled = true;
    falseButton.disabled = true;
  }
  controls.appendChild(trueButton);
  controls.appendChild(falseButton);
  root.appendChild(controls);

  container.appendChild(root);
  return { root, trueButton, falseButton, renderError };
}

export function renderBanner(doc: Document, container: HTMLElement, message: string,
                             retryLabel: string | null = null): HTMLButtonElement | null {
  const banner = doc.createElement("div");
  banner.className = "banner banner-warn";
  banner.textContent = message;
  let retry: HTMLButtonElement | null = null;
  if (retryLabel !== null) {
    retry = doc.createElement("button");
    retry.textContent = retryLabel;
    retry.className = "retry-button";
    banner.appendChild(retry);
  }
  container.prepend(banner);
  return retry;
}
