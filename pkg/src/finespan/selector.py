"""Best-of-n / worst-of-n selection over scored candidate generations.

Selection draws a size-n subset of a prompt's candidates without replacement
(seeded, so runs are reproducible), then keeps the candidate with the lowest
passage score (best) or highest (worst); ties break toward the lexicographically
smallest candidate id. The curve utility estimates how the best-of-n score
improves with n by Monte Carlo over shared per-draw permutations, which makes
the subsets nested and the mean provably non-increasing in n.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .reward import PassageScore, Scorer, score_passage

BEST = "best"
WORST = "worst"
MODES = (BEST, WORST)


@dataclass(frozen=True)
class Candidate:
    id: str
    response: str
    score: PassageScore


@dataclass(frozen=True)
class CandidateSet:
    """All scored candidates generated for one prompt."""

    prompt_id: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"prompt {self.prompt_id!r} has no candidates")
        for c in self.candidates:
            if not math.isfinite(c.score.value):
                raise ValueError(f"candidate {c.id!r} has non-finite score")


def select(candidate_set: CandidateSet, n: int, mode: str, seed: int = 0) -> Candidate:
    """Pick the best or worst of ``n`` candidates drawn without replacement."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    count = len(candidate_set.candidates)
    if n < 1 or n > count:
        raise ValueError(f"n must be in [1, {count}], got {n}")
    if n == count:
        pool = list(candidate_set.candidates)
    else:
        pool = random.Random(seed).sample(list(candidate_set.candidates), n)
    if mode == BEST:
        return min(pool, key=lambda c: (c.score.value, c.id))
    return min(pool, key=lambda c: (-c.score.value, c.id))


@dataclass(frozen=True)
class CurvePoint:
    """Monte Carlo best-of-n summary at one n.

    ``variance`` pools all (prompt, draw) samples; ``prompt_variance`` is the
    variance of per-prompt means and ``draw_variance`` the mean of per-prompt
    variances across draws, since either reading of "variance" can be wanted.
    """

    n: int
    mean: float
    variance: float
    prompt_variance: float
    draw_variance: float


@dataclass(frozen=True)
class SelectionCurve:
    points: tuple[CurvePoint, ...]

    def to_csv(self) -> str:
        lines = ["n,mean,variance"]
        for p in self.points:
            lines.append(f"{p.n},{p.mean},{p.variance}")
        return "\n".join(lines) + "\n"


def curve(
    sets: Sequence[CandidateSet], grid: Sequence[int], draws: int, seed: int = 0
) -> SelectionCurve:
    """Best-of-n score mean and variance for each n in ``grid``.

    Each draw shuffles a prompt's candidates once and reads prefix minima, so
    for fixed (prompt, draw) the chosen subsets are nested across the grid.
    """
    if draws < 1:
        raise ValueError("draws must be positive")
    if not sets:
        raise ValueError("no candidate sets")
    min_count = min(len(s.candidates) for s in sets)
    for n in grid:
        if n < 1 or n > min_count:
            raise ValueError(f"grid value {n} exceeds the smallest candidate count {min_count}")

    rng = random.Random(seed)
    by_n: dict[int, list[list[float]]] = {n: [] for n in grid}  # n -> per-prompt draw values
    for cset in sets:
        values = [c.score.value for c in cset.candidates]
        per_prompt: dict[int, list[float]] = {n: [] for n in grid}
        for _ in range(draws):
            perm = rng.sample(values, len(values))
            running = math.inf
            prefix_min = []
            for v in perm:
                running = min(running, v)
                prefix_min.append(running)
            for n in grid:
                per_prompt[n].append(prefix_min[n - 1])
        for n in grid:
            by_n[n].append(per_prompt[n])

    points = []
    for n in grid:
        rows = np.array(by_n[n], dtype=float)  # (prompts, draws)
        points.append(
            CurvePoint(
                n=n,
                mean=float(rows.mean()),
                variance=float(rows.var()),
                prompt_variance=float(rows.mean(axis=1).var()),
                draw_variance=float(rows.var(axis=1).mean()),
            )
        )
    return SelectionCurve(tuple(points))


def score_external(
    path: str | Path, model: Scorer, granularity=None
) -> list[CandidateSet]:
    """Score a generations file and group candidates by prompt.

    Expects JSONL lines with ``prompt_id``, ``candidate_id``, ``prompt`` and
    ``response`` string fields; prompts keep first-seen order, candidates file
    order. Scoring a file twice yields identical structures.
    """
    groups: dict[str, list[Candidate]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: malformed JSON: {exc.msg}") from None
            for key in ("prompt_id", "candidate_id", "prompt", "response"):
                if key not in obj or not isinstance(obj[key], str):
                    raise ValueError(f"line {line_no}: missing or non-string field {key!r}")
            bucket = groups.setdefault(obj["prompt_id"], [])
            if any(c.id == obj["candidate_id"] for c in bucket):
                raise ValueError(
                    f"line {line_no}: duplicate candidate {obj['candidate_id']!r} "
                    f"for prompt {obj['prompt_id']!r}"
                )
            score = score_passage(model, obj["prompt"], obj["response"], granularity)
            bucket.append(Candidate(obj["candidate_id"], obj["response"], score))
    return [CandidateSet(pid, tuple(cands)) for pid, cands in groups.items()]
