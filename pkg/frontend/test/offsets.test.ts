import { describe, expect, it } from "vitest";

import { pointLength, pointToUnit, rangeToUnitOffsets, unitToPoint } from "../src/offsets";

// surrogate pairs (🙂), combining-free accents (é), and CJK in one string
const MULTIBYTE = "Ein Café mit Blick. 🙂 Ein naïver Gast lächelt. 犬が遊ぶ。";

describe("unitToPoint / pointToUnit", () => {
  it("is the identity on pure ASCII", () => {
    const text = "plain ascii text";
    for (let i = 0; i <= text.length; i++) {
      expect(unitToPoint(text, i)).toBe(i);
      expect(pointToUnit(text, i)).toBe(i);
    }
  });

  it("round-trips every code point boundary of multibyte text", () => {
    const points = pointLength(MULTIBYTE);
    for (let p = 0; p <= points; p++) {
      const unit = pointToUnit(MULTIBYTE, p);
      expect(unitToPoint(MULTIBYTE, unit)).toBe(p);
    }
  });

  it("counts the emoji as a single code point", () => {
    const emojiUnit = MULTIBYTE.indexOf("🙂");
    const before = unitToPoint(MULTIBYTE, emojiUnit);
    const after = unitToPoint(MULTIBYTE, emojiUnit + 2); // surrogate pair = 2 units
    expect(after - before).toBe(1);
  });

  it("matches the backend's code point length convention", () => {
    // Python's len() counts code points: the emoji is 1, not 2
    expect(pointLength("🙂")).toBe(1);
    expect(pointLength(MULTIBYTE)).toBe([...MULTIBYTE].length);
  });

  it("clamps past-the-end point offsets", () => {
    expect(pointToUnit("ab", 99)).toBe(2);
  });
});

describe("rangeToUnitOffsets", () => {
  it("resolves offsets across multiple text nodes", () => {
    const pane = document.createElement("div");
    const a = document.createElement("span");
    a.textContent = "Hello ";
    const b = document.createElement("span");
    b.textContent = "world";
    pane.append(a, b);
    document.body.appendChild(pane);

    const range = document.createRange();
    range.setStart(a.firstChild!, 2);
    range.setEnd(b.firstChild!, 3);
    expect(rangeToUnitOffsets(pane, range)).toEqual({ start: 2, end: 9 });
    pane.remove();
  });

  it("returns null for collapsed ranges", () => {
    const pane = document.createElement("div");
    pane.textContent = "abc";
    document.body.appendChild(pane);
    const range = document.createRange();
    range.setStart(pane.firstChild!, 1);
    range.setEnd(pane.firstChild!, 1);
    expect(rangeToUnitOffsets(pane, range)).toBeNull();
    pane.remove();
  });

  it("returns null for ranges outside the container", () => {
    const pane = document.createElement("div");
    pane.textContent = "abc";
    const other = document.createElement("div");
    other.textContent = "xyz";
    document.body.append(pane, other);
    const range = document.createRange();
    range.setStart(other.firstChild!, 0);
    range.setEnd(other.firstChild!, 2);
    expect(rangeToUnitOffsets(pane, range)).toBeNull();
    pane.remove();
    other.remove();
  });
});
