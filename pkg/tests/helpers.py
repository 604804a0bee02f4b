"""Shared builders and independent oracles used across the test suite."""

from __future__ import annotations

import random

import numpy as np

from finespan.corpus import AnnotatedResponse, Label, SpanAnnotation
from finespan.segmenter import split_sentences

ACCURATE_SENTENCES = [
    "The image features a dog.",
    "A man sits on a bench.",
    "Two cups rest on the table.",
    "The kitchen is bright and clean.",
    "A red bus waits at the corner.",
    "Children play near the fountain.",
]
INACCURATE_SENTENCES = [
    "A purple elephant floats above the table.",
    "Several purple penguins juggle plates.",
    "A purple dragon naps under the sink.",
]
ANALYSIS_SENTENCES = [
    "This scene feels calm and quiet.",
    "The mood suggests a lazy afternoon.",
    "It looks like a cozy weekend morning.",
]

WORD_POOL = [
    "image", "dog", "table", "bench", "cup", "kitchen", "bus", "corner",
    "fountain", "bright", "red", "two", "the", "a", "near", "on", "café",
    "naïve", "niño", "🙂", "犬", "☂", "straße",
]


def make_record(
    response: str,
    spans: list[tuple[int, int, Label]] | None = None,
    rec_id: str = "r1",
    prompt: str = "Describe the image.",
    split: str = "train",
) -> AnnotatedResponse:
    return AnnotatedResponse(
        rec_id,
        f"img://{rec_id}",
        prompt,
        response,
        [SpanAnnotation(s, e, label) for s, e, label in (spans or [])],
        split,
    )


def compose_record(
    rng: random.Random, rec_id: str, split: str = "train"
) -> AnnotatedResponse:
    """Record whose sentences come from the labeled pools, spans aligned to them."""
    n_sentences = rng.randint(2, 4)
    parts: list[tuple[str, Label | None]] = []
    for _ in range(n_sentences):
        kind = rng.random()
        if kind < 0.5:
            parts.append((rng.choice(ACCURATE_SENTENCES), None))
        elif kind < 0.8:
            parts.append((rng.choice(INACCURATE_SENTENCES), Label.INACCURATE))
        else:
            parts.append((rng.choice(ANALYSIS_SENTENCES), Label.ANALYSIS))
    response = ""
    spans: list[tuple[int, int, Label]] = []
    for text, label in parts:
        if response:
            response += " "
        start = len(response)
        response += text
        if label is not None:
            spans.append((start, len(response), label))
    return make_record(response, spans, rec_id=rec_id, split=split)


def random_record(rng: random.Random, rec_id: str) -> AnnotatedResponse:
    """Fully randomized record: arbitrary words, arbitrary valid span layout."""
    n_words = rng.randint(1, 30)
    words = [rng.choice(WORD_POOL) for _ in range(n_words)]
    sep_terminator = rng.random() < 0.8
    response = " ".join(words) + ("." if sep_terminator else "")
    spans: list[tuple[int, int, Label]] = []
    cursor = 0
    while cursor < len(response):
        gap = rng.randint(0, 6)
        start = cursor + gap
        if start >= len(response):
            break
        length = rng.randint(1, 8)
        end = min(len(response), start + length)
        spans.append((start, end, rng.choice(list(Label))))
        cursor = end
        if rng.random() < 0.3:
            break
    prompt = " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(1, 6)))
    return make_record(
        response,
        spans,
        rec_id=rec_id,
        prompt=prompt,
        split=rng.choice(["train", "val"]),
    )


def random_corpus(seed: int, n: int) -> list[AnnotatedResponse]:
    rng = random.Random(seed)
    return [random_record(rng, f"rec-{i:05d}") for i in range(n)]


def purple_corpus(n: int = 16) -> list[AnnotatedResponse]:
    """Toy corpus where 'purple' only ever appears inside inaccurate spans."""
    rng = random.Random(7)
    records = []
    for i in range(n):
        good = rng.choice(ACCURATE_SENTENCES)
        bad = rng.choice(INACCURATE_SENTENCES)
        if rng.random() < 0.5:
            response = f"{good} {bad}"
            spans = [(len(good) + 1, len(response), Label.INACCURATE)]
        else:
            response = f"{bad} {good}"
            spans = [(0, len(bad), Label.INACCURATE)]
        records.append(make_record(response, spans, rec_id=f"p{i:03d}"))
    return records


def char_labels(record: AnnotatedResponse) -> list[Label]:
    """Per-character label array with implicit accurate gaps materialized."""
    labels = [Label.ACCURATE] * len(record.response)
    for span in record.spans:
        for i in range(span.start, span.end):
            labels[i] = span.label
    return labels


def brute_force_condense(record: AnnotatedResponse) -> list[Label]:
    """Independent per-character implementation of the sentence condensation rule."""
    text = record.response
    labels = char_labels(record)
    out: list[Label] = []
    for s, e in split_sentences(text):
        sentence = [labels[i] for i in range(s, e) if not text[i].isspace()]
        if any(l in (Label.INACCURATE, Label.UNSURE) for l in sentence):
            out.append(Label.INACCURATE)
        elif 2 * sum(1 for l in sentence if l is Label.ANALYSIS) >= len(sentence):
            out.append(Label.ANALYSIS)
        else:
            out.append(Label.ACCURATE)
    return out


def naive_logprob(model, context, continuation) -> float:
    """Per-position softmax recomputation, independent of the model's own path."""
    ids = [model.vocab.id_of(t) for t in list(context) + list(continuation)]
    total = 0.0
    for pos in range(len(list(context)), len(ids)):
        if pos == 0:
            h = model.params["start"]
        else:
            h = model.params["embedding"][ids[pos - 1]]
        z = model.params["proj_w"] @ h + model.params["proj_b"]
        exp = np.exp(z - z.max())
        probs = exp / exp.sum()
        total += float(np.log(probs[ids[pos]]))
    return total


def grads_equal(a: dict, b: dict) -> bool:
    return set(a) == set(b) and all(np.array_equal(a[k], b[k]) for k in a)
