"""Data model, JSONL ingestion, validation, and statistics for span-annotated responses.

A corpus is a list of records, each tying one image reference and prompt to one
generated response plus a set of labeled character spans. Offsets count Unicode
code points (not bytes) and spans are half-open ``[start, end)``. Characters not
covered by any span are implicitly accurate; those gaps are never stored.

Canonical on-disk form is JSONL, one record per line::

    {"id":"...","image_ref":"...","prompt":"...","response":"...",
     "spans":[{"start":0,"end":5,"label":"inaccurate"}],"split":"train"}

``export`` emits this form deterministically (fixed key order, compact
separators, UTF-8, LF) so that re-exporting an ingested corpus is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from enum import Enum
from typing import Sequence


class Label(str, Enum):
    """Annotation category for a response span."""

    ACCURATE = "accurate"
    INACCURATE = "inaccurate"
    ANALYSIS = "analysis"
    UNSURE = "unsure"


VALID_SPLITS = ("train", "val")


class CorpusError(ValueError):
    """A corpus file or record cannot be used as-is."""


@dataclass(frozen=True)
class SpanAnnotation:
    """Half-open character span ``[start, end)`` with its label."""

    start: int
    end: int
    label: Label


@dataclass
class AnnotatedResponse:
    """One image-prompt-response triplet with labeled spans."""

    id: str
    image_ref: str
    prompt: str
    response: str
    spans: list[SpanAnnotation] = field(default_factory=list)
    split: str = "train"


@dataclass(frozen=True)
class Violation:
    """A single invariant violation found by :func:`validate`."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def validate(record: AnnotatedResponse) -> list[Violation]:
    """Check every record invariant; an empty list means the record is valid.

    Violation codes: ``split``, ``label``, ``bounds``, ``empty_span``,
    ``order``, ``overlap``.
    """
    issues: list[Violation] = []
    n = len(record.response)

    if record.split not in VALID_SPLITS:
        issues.append(Violation("split", f"unknown split {record.split!r}"))

    for i, span in enumerate(record.spans):
        if not isinstance(span.label, Label):
            issues.append(Violation("label", f"span {i}: unknown label {span.label!r}"))
        if span.start < 0 or span.end > n:
            issues.append(
                Violation(
                    "bounds",
                    f"span {i} [{span.start},{span.end}) outside response of length {n}",
                )
            )
        if span.start == span.end:
            issues.append(Violation("empty_span", f"span {i} [{span.start},{span.end}) is empty"))
        elif span.start > span.end:
            issues.append(
                Violation("bounds", f"span {i} [{span.start},{span.end}) has negative length")
            )

    if any(record.spans[i].start < record.spans[i - 1].start for i in range(1, len(record.spans))):
        issues.append(Violation("order", "spans not sorted by start"))

    ordered = sorted(range(len(record.spans)), key=lambda i: (record.spans[i].start, record.spans[i].end))
    for a, b in zip(ordered, ordered[1:]):
        first, second = record.spans[a], record.spans[b]
        if first.end > second.start:
            issues.append(
                Violation(
                    "overlap",
                    f"span {a} [{first.start},{first.end}) overlaps span {b} "
                    f"[{second.start},{second.end})",
                )
            )
    return issues


def _require(obj: dict, key: str, kind: type, line_no: int):
    if key not in obj:
        raise CorpusError(f"line {line_no}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise CorpusError(f"line {line_no}: field {key!r} must be {kind.__name__}")
    return value


def parse_record(obj: dict, line_no: int = 0) -> AnnotatedResponse:
    """Build a record from a decoded JSON object, raising on schema problems.

    Unknown label strings are kept verbatim so that :func:`validate` can report
    them; every other shape problem raises :class:`CorpusError` immediately.
    """
    rec_id = _require(obj, "id", str, line_no)
    image_ref = _require(obj, "image_ref", str, line_no)
    prompt = _require(obj, "prompt", str, line_no)
    response = _require(obj, "response", str, line_no)
    split = _require(obj, "split", str, line_no)
    raw_spans = _require(obj, "spans", list, line_no)

    spans: list[SpanAnnotation] = []
    for i, raw in enumerate(raw_spans):
        if not isinstance(raw, dict):
            raise CorpusError(f"line {line_no}: span {i} must be an object")
        try:
            start = raw["start"]
            end = raw["end"]
            raw_label = raw["label"]
        except KeyError as exc:
            raise CorpusError(f"line {line_no}: span {i} missing field {exc.args[0]!r}") from None
        if not isinstance(start, int) or not isinstance(end, int) or isinstance(start, bool) or isinstance(end, bool):
            raise CorpusError(f"line {line_no}: span {i} offsets must be integers")
        try:
            label = Label(raw_label)
        except ValueError:
            label = raw_label  # validate() reports it
        spans.append(SpanAnnotation(start, end, label))
    return AnnotatedResponse(rec_id, image_ref, prompt, response, spans, split)


def ingest(path: str | Path) -> list[AnnotatedResponse]:
    """Read and validate a JSONL corpus, preserving file order.

    Raises :class:`CorpusError` naming the line for malformed JSON, schema
    violations, invariant violations, or duplicate ids.
    """
    records: list[AnnotatedResponse] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: malformed JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"line {line_no}: expected a JSON object")
            record = parse_record(obj, line_no)
            issues = validate(record)
            if issues:
                detail = "; ".join(str(v) for v in issues)
                raise CorpusError(f"line {line_no}: record {record.id!r}: {detail}")
            if record.id in seen:
                raise CorpusError(
                    f"line {line_no}: duplicate id {record.id!r} (first seen on line {seen[record.id]})"
                )
            seen[record.id] = line_no
            records.append(record)
    return records


def record_to_obj(record: AnnotatedResponse) -> dict:
    """Record as a plain dict in canonical key order."""
    return {
        "id": record.id,
        "image_ref": record.image_ref,
        "prompt": record.prompt,
        "response": record.response,
        "spans": [
            {"start": s.start, "end": s.end, "label": s.label.value}
            for s in sorted(record.spans, key=lambda s: (s.start, s.end))
        ],
        "split": record.split,
    }


def dumps_canonical(obj: dict) -> str:
    """Compact, non-ASCII-preserving JSON used for every JSONL surface."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def export(corpus: Sequence[AnnotatedResponse]) -> bytes:
    """Serialize a valid corpus to canonical JSONL bytes.

    Output is deterministic: ``export(c)`` twice is byte-identical and
    ``ingest(export(c)) == c`` for any valid corpus.
    """
    lines = [dumps_canonical(record_to_obj(rec)) for rec in corpus]
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


@dataclass
class CorpusStats:
    """Aggregate counts over a corpus.

    ``density_histogram`` has 10 buckets over (0, 1]: bucket ``b`` counts
    sentences whose fraction of non-whitespace characters labeled inaccurate
    falls in ``(b/10, (b+1)/10]``. Only sentences containing at least one
    inaccurate character are counted, so bucket totals sum to the number of
    such sentences.
    """

    split_counts: dict[str, int]
    span_counts: dict[Label, int]
    char_counts: dict[Label, int]
    implicit_accurate_chars: int
    total_chars: int
    density_histogram: list[int]


def stats(corpus: Sequence[AnnotatedResponse]) -> CorpusStats:
    from .segmenter import split_sentences  # deferred: segmenter imports corpus types

    split_counts: dict[str, int] = {}
    span_counts: dict[Label, int] = {label: 0 for label in Label}
    char_counts: dict[Label, int] = {label: 0 for label in Label}
    implicit = 0
    total = 0
    histogram = [0] * 10

    for record in corpus:
        issues = validate(record)
        if issues:
            detail = "; ".join(str(v) for v in issues)
            raise CorpusError(f"record {record.id!r}: {detail}")
        split_counts[record.split] = split_counts.get(record.split, 0) + 1
        total += len(record.response)
        covered = 0
        for span in record.spans:
            span_counts[span.label] += 1
            char_counts[span.label] += span.end - span.start
            covered += span.end - span.start
        implicit += len(record.response) - covered

        text = record.response
        for s, e in split_sentences(text):
            nonws = 0
            for i in range(s, e):
                if not text[i].isspace():
                    nonws += 1
            inaccurate = 0
            for span in record.spans:
                if span.label is not Label.INACCURATE:
                    continue
                lo, hi = max(s, span.start), min(e, span.end)
                for i in range(lo, hi):
                    if not text[i].isspace():
                        inaccurate += 1
            if inaccurate > 0:
                # integer form of ceil(10 * density) - 1, clamped to the top bucket
                bucket = min(9, (10 * inaccurate + nonws - 1) // nonws - 1)
                histogram[bucket] += 1

    return CorpusStats(split_counts, span_counts, char_counts, implicit, total, histogram)
