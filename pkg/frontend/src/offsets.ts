/**
 * Offset conversions between JavaScript's UTF-16 code units and the Unicode
 * code point offsets the backend stores. Every span sent to the server must
 * use code point offsets, or multi-byte text (emoji, CJK) would drift.
 */

/** Number of code points in text.slice(0, unitOffset). */
export function unitToPoint(text: string, unitOffset: number): number {
  let points = 0;
  let i = 0;
  while (i < unitOffset && i < text.length) {
    const code = text.codePointAt(i)!;
    i += code > 0xffff ? 2 : 1;
    points += 1;
  }
  return points;
}

/** UTF-16 offset of the code point index; clamps to the end of the text. */
export function pointToUnit(text: string, pointOffset: number): number {
  let points = 0;
  let i = 0;
  while (points < pointOffset && i < text.length) {
    const code = text.codePointAt(i)!;
    i += code > 0xffff ? 2 : 1;
    points += 1;
  }
  return i;
}

/** Total code points in the text (what the backend calls its length). */
export function pointLength(text: string): number {
  return unitToPoint(text, text.length);
}

/**
 * Absolute UTF-16 offsets of a DOM Range inside a container element whose
 * visible text is the concatenation of its text nodes. Returns null when the
 * range does not lie inside the container or is collapsed.
 */
export function rangeToUnitOffsets(
  container: Element,
  range: Range,
): { start: number; end: number } | null {
  const start = positionToUnitOffset(container, range.startContainer, range.startOffset);
  const end = positionToUnitOffset(container, range.endContainer, range.endOffset);
  if (start === null || end === null || start === end) {
    return null;
  }
  return start <= end ? { start, end } : { start: end, end: start };
}

function positionToUnitOffset(container: Element, node: Node, offset: number): number | null {
  if (!container.contains(node)) {
    return null;
  }
  let units = 0;
  const walker = node.ownerDocument!.createTreeWalker(container, 4 /* NodeFilter.SHOW_TEXT */);
  let current = walker.nextNode();
  while (current) {
    if (current === node) {
      return units + offset;
    }
    units += (current.textContent ?? "").length;
    current = walker.nextNode();
  }
  // node is an element (e.g. the pane itself): offset counts child nodes
  if (node.nodeType === 1 /* ELEMENT_NODE */) {
    let total = 0;
    for (let i = 0; i < offset && i < node.childNodes.length; i++) {
      total += (node.childNodes[i].textContent ?? "").length;
    }
    return total;
  }
  return null;
}
