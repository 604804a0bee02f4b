"""Deterministic sentence segmentation, whitespace tokenization, and label condensation.

The sentence rule is an exact automaton, not a linguistic model: a sentence ends
after ``.``, ``!`` or ``?`` (plus any immediately following closing quotes or
brackets) when the next character is whitespace or end-of-text. The terminator
and closers belong to the preceding sentence; surrounding whitespace belongs to
no sentence. Text without a terminator is a single sentence. Tokens are maximal
runs of non-whitespace characters.

Condensation folds sub-sentence span labels into one label per sentence:
inaccurate (or unsure) anywhere makes the sentence inaccurate; otherwise the
sentence is analysis when at least half of its non-whitespace characters carry
analysis spans, else accurate.
"""

from __future__ import annotations

import re
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

from .corpus import AnnotatedResponse, CorpusError, Label, SpanAnnotation, validate

SENTENCE_TERMINATORS = frozenset(".!?")
CLOSING_MARKS = frozenset("\"')]}”’»")

_TOKEN_RE = re.compile(r"\S+")

SENTENCE_DENSITY = "sentence"
SEGMENT_DENSITY = "segment"
DENSITIES = (SENTENCE_DENSITY, SEGMENT_DENSITY)


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of each sentence, trimmed of surrounding whitespace."""
    spans: list[tuple[int, int]] = []
    n = len(text)
    seg_start: int | None = None
    i = 0
    while i < n:
        ch = text[i]
        if seg_start is None and not ch.isspace():
            seg_start = i
        if seg_start is not None and ch in SENTENCE_TERMINATORS:
            j = i + 1
            while j < n and text[j] in CLOSING_MARKS:
                j += 1
            if j >= n or text[j].isspace():
                spans.append((seg_start, j))
                seg_start = None
                i = j
                continue
        i += 1
    if seg_start is not None:
        end = n
        while end > seg_start and text[end - 1].isspace():
            end -= 1
        spans.append((seg_start, end))
    return spans


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


class TokenSequence:
    """Tokens of one source text, with offsets back into it."""

    def __init__(self, tokens: Sequence[Token]):
        self.tokens = tuple(tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, idx: int) -> Token:
        return self.tokens[idx]

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenSequence) and self.tokens == other.tokens

    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def tokenize(text: str) -> TokenSequence:
    """Maximal non-whitespace runs, in order, with character offsets."""
    return TokenSequence([Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)])


class Granularity(Enum):
    """Label-space reduction applied before reward training and scoring."""

    BINARY = "binary"
    TERNARY = "ternary"

    @property
    def num_classes(self) -> int:
        return 2 if self is Granularity.BINARY else 3

    def class_names(self) -> tuple[str, ...]:
        if self is Granularity.BINARY:
            return ("accurate", "inaccurate")
        return ("accurate", "inaccurate", "analysis")

    def class_index(self, label: Label) -> int:
        if self is Granularity.BINARY:
            return _BINARY_INDEX[label]
        return _TERNARY_INDEX[label]


_BINARY_INDEX = {
    Label.ACCURATE: 0,
    Label.ANALYSIS: 0,
    Label.INACCURATE: 1,
    Label.UNSURE: 1,
}
_TERNARY_INDEX = {
    Label.ACCURATE: 0,
    Label.INACCURATE: 1,
    Label.ANALYSIS: 2,
    Label.UNSURE: 1,
}


@dataclass(frozen=True)
class SentenceSegment:
    """A sentence span with its condensed label (never unsure)."""

    start: int
    end: int
    label: Label


def _check_valid(record: AnnotatedResponse) -> None:
    issues = validate(record)
    if issues:
        detail = "; ".join(str(v) for v in issues)
        raise CorpusError(f"record {record.id!r}: {detail}")


def condense(record: AnnotatedResponse) -> list[SentenceSegment]:
    """One label per sentence from the record's sub-sentence spans.

    A sentence is inaccurate if any inaccurate or unsure span touches one of
    its non-whitespace characters; else analysis if analysis spans cover at
    least half of its non-whitespace characters; else accurate.
    """
    _check_valid(record)
    text = record.response
    segments: list[SentenceSegment] = []
    for s, e in split_sentences(text):
        nonws = sum(1 for i in range(s, e) if not text[i].isspace())
        bad = 0
        analysis = 0
        for span in record.spans:
            lo, hi = max(s, span.start), min(e, span.end)
            if lo >= hi:
                continue
            count = sum(1 for i in range(lo, hi) if not text[i].isspace())
            if span.label in (Label.INACCURATE, Label.UNSURE):
                bad += count
            elif span.label is Label.ANALYSIS:
                analysis += count
        if bad > 0:
            label = Label.INACCURATE
        elif 2 * analysis >= nonws and nonws > 0:
            label = Label.ANALYSIS
        else:
            label = Label.ACCURATE
        segments.append(SentenceSegment(s, e, label))
    return segments


def reduce_labels(
    segments: Sequence[SentenceSegment] | Sequence[Label], granularity: Granularity
) -> list[int]:
    """Map segment labels to class indices under the given granularity."""
    out: list[int] = []
    for item in segments:
        label = item.label if isinstance(item, SentenceSegment) else item
        out.append(granularity.class_index(label))
    return out


def last_token_index(tokens: TokenSequence, start: int, end: int) -> int | None:
    """Index of the last token whose span intersects ``[start, end)``."""
    starts = [t.start for t in tokens]
    idx = bisect_left(starts, end) - 1
    if idx < 0:
        return None
    if tokens[idx].end <= start:
        return None
    return idx


def segment_end_tokens(
    record: AnnotatedResponse, tokens: TokenSequence, density: str
) -> list[tuple[int, Label]]:
    """Target positions for reward training: one per unit, at its last token.

    Sentence density emits one target per condensed sentence; segment density
    one per annotated span plus per implicit-accurate gap, with unsure folded
    into inaccurate. Units that touch no token are skipped; every other token
    position is masked (absent from the output).
    """
    if density not in DENSITIES:
        raise ValueError(f"unknown density {density!r}")
    if density == SENTENCE_DENSITY:
        units = [(seg.start, seg.end, seg.label) for seg in condense(record)]
    else:
        _check_valid(record)
        units = []
        cursor = 0
        for span in record.spans:
            if span.start > cursor:
                units.append((cursor, span.start, Label.ACCURATE))
            label = Label.INACCURATE if span.label is Label.UNSURE else span.label
            units.append((span.start, span.end, label))
            cursor = span.end
        if cursor < len(record.response):
            units.append((cursor, len(record.response), Label.ACCURATE))

    targets: list[tuple[int, Label]] = []
    for start, end, label in units:
        idx = last_token_index(tokens, start, end)
        if idx is not None:
            targets.append((idx, label))
    return targets


def majority_label(start: int, end: int, spans: Sequence[SpanAnnotation]) -> Label:
    """Label covering the majority of characters in ``[start, end)``.

    Uncovered characters count as accurate. Ties go to the label whose covering
    material starts earliest (a gap's position for implicit accurate).
    """
    length = end - start
    counts: dict[Label, int] = {}
    first_pos: dict[Label, int] = {}
    covered = 0
    cursor = start
    gap_start: int | None = None
    for span in spans:
        lo, hi = max(start, span.start), min(end, span.end)
        if lo >= hi:
            continue
        if lo > cursor and gap_start is None:
            gap_start = cursor
        counts[span.label] = counts.get(span.label, 0) + (hi - lo)
        first_pos.setdefault(span.label, span.start)
        covered += hi - lo
        cursor = hi
    if cursor < end and gap_start is None:
        gap_start = cursor
    implicit = length - covered
    if implicit > 0:
        counts[Label.ACCURATE] = counts.get(Label.ACCURATE, 0) + implicit
        if Label.ACCURATE not in first_pos:
            first_pos[Label.ACCURATE] = gap_start if gap_start is not None else start
    best = max(counts.items(), key=lambda kv: (kv[1], -first_pos[kv[0]]))
    return best[0]
