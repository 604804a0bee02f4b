/**
 * In-memory span lists, mirrored 1:1 by the rendered panes. All offsets here
 * are Unicode code points in the corpus convention: half-open [start, end),
 * sorted, non-overlapping. Unlabeled text is implicitly accurate and never
 * stored.
 */

export type CategoryLabel = "accurate" | "inaccurate" | "analysis" | "unsure";

export const CATEGORIES: CategoryLabel[] = ["accurate", "inaccurate", "analysis", "unsure"];

export interface Span {
  start: number;
  end: number;
  label: CategoryLabel;
}

export type AddResult = { ok: true; spans: Span[] } | { ok: false; reason: string };

/** Insert a span, rejecting empty, inverted, or overlapping selections. */
export function addSpan(spans: Span[], candidate: Span): AddResult {
  if (candidate.start >= candidate.end) {
    return { ok: false, reason: "selection is empty" };
  }
  for (const span of spans) {
    if (candidate.start < span.end && span.start < candidate.end) {
      return {
        ok: false,
        reason: `selection [${candidate.start},${candidate.end}) overlaps existing span [${span.start},${span.end})`,
      };
    }
  }
  const next = [...spans, candidate];
  next.sort((a, b) => a.start - b.start || a.end - b.end);
  return { ok: true, spans: next };
}

/** Remove the span that starts at the given offset, if any. */
export function removeSpanAt(spans: Span[], start: number): Span[] {
  return spans.filter((s) => s.start !== start);
}

export interface Segment {
  start: number;
  end: number;
  label: CategoryLabel | null; // null = implicit accurate
}

/** Split [0, length) into labeled spans and implicit-accurate gaps, in order. */
export function segments(spans: Span[], length: number): Segment[] {
  const out: Segment[] = [];
  let cursor = 0;
  for (const span of spans) {
    if (span.start > cursor) {
      out.push({ start: cursor, end: span.start, label: null });
    }
    out.push({ start: span.start, end: span.end, label: span.label });
    cursor = span.end;
  }
  if (cursor < length) {
    out.push({ start: cursor, end: length, label: null });
  }
  return out;
}
