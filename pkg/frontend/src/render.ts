/** DOM rendering for response panes: labeled spans plus implicit-accurate gaps. */

import { pointToUnit } from "./offsets";
import type { Span } from "./spans";
import { segments } from "./spans";

/**
 * Rebuild a pane's contents from its span list. The pane's text content is
 * always exactly the response text, so DOM selection offsets stay meaningful.
 */
export function renderPane(pane: HTMLElement, text: string, spans: Span[], length: number): void {
  pane.textContent = "";
  const doc = pane.ownerDocument;
  for (const segment of segments(spans, length)) {
    const slice = text.slice(pointToUnit(text, segment.start), pointToUnit(text, segment.end));
    const el = doc.createElement("span");
    el.textContent = slice;
    el.className = segment.label === null ? "seg implicit" : `seg label-${segment.label}`;
    el.dataset.start = String(segment.start);
    if (segment.label !== null) {
      el.title = `${segment.label} [${segment.start},${segment.end}) — click to remove`;
      el.dataset.labeled = "true";
    }
    pane.appendChild(el);
  }
}

export function renderViolations(container: HTMLElement, messages: string[]): void {
  container.textContent = "";
  const doc = container.ownerDocument;
  for (const message of messages) {
    const item = doc.createElement("div");
    item.className = "violation";
    item.textContent = message;
    container.appendChild(item);
  }
  container.hidden = messages.length === 0;
}
