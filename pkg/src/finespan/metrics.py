"""Hallucination rate over words and reward-vs-human correlation analytics.

The rate counts inaccurate words over total words excluding analysis words, so
a passage that is all subjective analysis is not penalized. Words are
whitespace tokens; a word takes the label covering the majority of its
characters (uncovered characters are accurate, unsure counts as inaccurate).
The human-eval style score of a record is the complement, its truthful
fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import AnnotatedResponse, Label
from .reward import PassageScore
from .segmenter import majority_label, tokenize


def hallucination_rate(record: AnnotatedResponse) -> float:
    """Inaccurate words / (total words - analysis words); 0 when the denominator is 0."""
    tokens = tokenize(record.response)
    inaccurate = 0
    analysis = 0
    for token in tokens:
        label = majority_label(token.start, token.end, record.spans)
        if label in (Label.INACCURATE, Label.UNSURE):
            inaccurate += 1
        elif label is Label.ANALYSIS:
            analysis += 1
    denom = len(tokens) - analysis
    if denom == 0:
        return 0.0
    return inaccurate / denom


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated response: its reward score and its human truthful fraction."""

    id: str
    reward_score: float
    truthful_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.truthful_fraction <= 1.0:
            raise ValueError(f"truthful fraction {self.truthful_fraction} outside [0, 1]")


def make_eval_record(record: AnnotatedResponse, passage: PassageScore) -> EvalRecord:
    return EvalRecord(record.id, passage.value, 1.0 - hallucination_rate(record))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation; None when undefined (fewer than 2 points or zero variance)."""
    if len(xs) != len(ys):
        raise ValueError("x and y must have the same length")
    n = len(xs)
    if n < 2:
        return None
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


def correlate(records: Sequence[EvalRecord]) -> float | None:
    """Pearson r between reward scores and truthful fractions."""
    return pearson([r.reward_score for r in records], [r.truthful_fraction for r in records])


def points_csv(records: Sequence[EvalRecord]) -> str:
    """Paired points as CSV for plotting: id,reward_score,human_score."""
    lines = ["id,reward_score,human_score"]
    for r in records:
        lines.append(f"{r.id},{r.reward_score},{r.truthful_fraction}")
    return "\n".join(lines) + "\n"
