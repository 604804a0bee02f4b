"""Reward-model training via masked per-token cross-entropy, and passage scoring.

Targets sit at the token concluding each unit (sentence or annotated segment,
per the configured density); every other position is masked out of the loss.
A trained sentence-density model scores a passage by reading, at each
sentence's end token, the probability that the sentence is non-hallucinated:
the passage score is the mean of the per-sentence negative log of that
probability, so 0 is perfect and higher is worse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import AnnotatedResponse
from .scorer import REWARD_TRAINABLE, Scorer, Vocabulary, log_softmax, softmax
from .segmenter import (
    DENSITIES,
    Granularity,
    SENTENCE_DENSITY,
    last_token_index,
    segment_end_tokens,
    split_sentences,
    tokenize,
)

PROB_FLOOR = 1e-12


@dataclass
class RmConfig:
    """Reward training recipe; the head's class count must match the granularity."""

    density: str = SENTENCE_DENSITY
    granularity: Granularity = Granularity.BINARY
    epochs: int = 100
    learning_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.density not in DENSITIES:
            raise ValueError(f"unknown density {self.density!r}")
        if isinstance(self.granularity, str):
            self.granularity = Granularity(self.granularity)


@dataclass
class TokenTargets:
    """Dense per-position training arrays for one record.

    ``labels`` is only meaningful where ``mask`` is true; masked entries may
    hold anything without affecting the loss or its gradient.
    """

    token_ids: np.ndarray
    labels: np.ndarray
    mask: np.ndarray


def build_targets(
    vocab: Vocabulary, record: AnnotatedResponse, density: str, granularity: Granularity
) -> TokenTargets:
    prompt_tokens = tokenize(record.prompt)
    response_tokens = tokenize(record.response)
    ids = vocab.encode(prompt_tokens.texts() + response_tokens.texts())
    labels = np.zeros(len(ids), dtype=np.int64)
    mask = np.zeros(len(ids), dtype=bool)
    offset = len(prompt_tokens)
    for token_idx, label in segment_end_tokens(record, response_tokens, density):
        pos = offset + token_idx
        labels[pos] = granularity.class_index(label)
        mask[pos] = True
    return TokenTargets(ids, labels, mask)


def rm_loss_and_grad(
    model: Scorer, targets: Sequence[TokenTargets]
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over unmasked positions, with exact gradients."""
    ids = np.concatenate([t.token_ids[t.mask] for t in targets]) if targets else np.array([], dtype=np.int64)
    labels = np.concatenate([t.labels[t.mask] for t in targets]) if targets else np.array([], dtype=np.int64)
    n = len(ids)
    if n == 0:
        raise ValueError("no target positions to train on")
    h = model.params["embedding"][ids]
    z = h @ model.params["cls_w"].T + model.params["cls_b"]
    logp = log_softmax(z)
    loss = float(-logp[np.arange(n), labels].mean())

    grads = model.zero_grads()
    dz = softmax(z)
    dz[np.arange(n), labels] -= 1.0
    dz /= n
    grads["cls_w"] += dz.T @ h
    grads["cls_b"] += dz.sum(axis=0)
    dh = dz @ model.params["cls_w"]
    np.add.at(grads["embedding"], ids, dh)
    return loss, grads


def train_rm(
    model: Scorer, records: Sequence[AnnotatedResponse], cfg: RmConfig
) -> tuple[Scorer, list[float]]:
    """Full-batch gradient descent on the masked cross-entropy.

    Only the projection and classification head are updated. The trace holds
    the loss evaluated at the start of each epoch, so with an untrained head
    ``trace[0] == ln(num_classes)``.
    """
    if model.num_classes != cfg.granularity.num_classes:
        raise ValueError(
            f"model has {model.num_classes} classes but granularity "
            f"{cfg.granularity.value!r} needs {cfg.granularity.num_classes}"
        )
    targets = [build_targets(model.vocab, r, cfg.density, cfg.granularity) for r in records]
    if sum(int(t.mask.sum()) for t in targets) == 0:
        raise ValueError("corpus produced zero reward targets")
    trace: list[float] = []
    for _ in range(cfg.epochs):
        loss, grads = rm_loss_and_grad(model, targets)
        trace.append(loss)
        for name in REWARD_TRAINABLE:
            model.params[name] -= cfg.learning_rate * grads[name]
    return model, trace


@dataclass
class RmMetrics:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray


def predictions(
    model: Scorer, records: Sequence[AnnotatedResponse], cfg: RmConfig
) -> tuple[np.ndarray, np.ndarray]:
    """(gold, predicted) class indices over every target position, in order."""
    gold: list[int] = []
    pred: list[int] = []
    for record in records:
        t = build_targets(model.vocab, record, cfg.density, cfg.granularity)
        if not t.mask.any():
            continue
        logits = model.class_logits_ids(t.token_ids[t.mask])
        gold.extend(int(x) for x in t.labels[t.mask])
        pred.extend(int(x) for x in logits.argmax(axis=1))
    return np.array(gold, dtype=np.int64), np.array(pred, dtype=np.int64)


def confusion_matrix(gold: np.ndarray, pred: np.ndarray, num_classes: int) -> np.ndarray:
    mat = np.zeros((num_classes, num_classes), dtype=np.int64)
    for g, p in zip(gold, pred):
        mat[g, p] += 1
    return mat


def macro_f1(confusion: np.ndarray) -> float:
    """Mean per-class F1; classes absent from both gold and predictions are skipped."""
    scores: list[float] = []
    for i in range(confusion.shape[0]):
        tp = confusion[i, i]
        fn = confusion[i, :].sum() - tp
        fp = confusion[:, i].sum() - tp
        if tp + fn + fp == 0:
            continue
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores)) if scores else 0.0


def eval_rm(model: Scorer, records: Sequence[AnnotatedResponse], cfg: RmConfig) -> RmMetrics:
    gold, pred = predictions(model, records, cfg)
    if len(gold) == 0:
        raise ValueError("no target positions to evaluate")
    mat = confusion_matrix(gold, pred, cfg.granularity.num_classes)
    accuracy = float((gold == pred).mean())
    return RmMetrics(accuracy, macro_f1(mat), mat)


_TERNARY_TO_BINARY = (0, 1, 0)  # accurate, inaccurate, analysis -> accurate-class, inaccurate-class


def reduce_ternary_to_binary(data):
    """Merge the accurate and analysis classes of ternary outputs.

    Accepts a 3x3 confusion matrix (returns the merged 2x2, counts preserved)
    or a sequence of ternary class indices (returns binary indices).
    """
    arr = np.asarray(data)
    if arr.ndim == 2:
        if arr.shape != (3, 3):
            raise ValueError(f"expected a 3x3 confusion matrix, got shape {arr.shape}")
        merged = np.zeros((2, 2), dtype=arr.dtype)
        for i in range(3):
            for j in range(3):
                merged[_TERNARY_TO_BINARY[i], _TERNARY_TO_BINARY[j]] += arr[i, j]
        return merged
    if arr.ndim == 1:
        if arr.size and (arr.min() < 0 or arr.max() > 2):
            raise ValueError("ternary class indices must be in {0, 1, 2}")
        return np.array([_TERNARY_TO_BINARY[int(i)] for i in arr], dtype=np.int64)
    raise ValueError("expected a confusion matrix or a sequence of predictions")


@dataclass(frozen=True)
class PassageScore:
    """Per-sentence non-hallucination probabilities and their mean negative log."""

    sentence_probs: tuple[float, ...]
    sentence_scores: tuple[float, ...]
    value: float


def passage_score_from_probs(probs: Sequence[float]) -> PassageScore:
    """Score from per-sentence probabilities; the mean is order-independent."""
    if not len(probs):
        raise ValueError("passage has no sentences")
    floored = [max(float(p), PROB_FLOOR) for p in probs]
    scores = tuple(-math.log(p) for p in floored)
    # fsum is exactly rounded, so the mean is invariant under sentence order
    return PassageScore(tuple(float(p) for p in probs), scores, math.fsum(scores) / len(scores))


def granularity_for(model: Scorer) -> Granularity:
    if model.num_classes == 2:
        return Granularity.BINARY
    if model.num_classes == 3:
        return Granularity.TERNARY
    raise ValueError(f"cannot infer granularity from {model.num_classes} classes")


def score_passage(
    model: Scorer, prompt: str, response: str, granularity: Granularity | None = None
) -> PassageScore:
    """Mean per-sentence negative log non-hallucination probability.

    Under ternary granularity both the accurate and analysis classes count as
    non-hallucination. Probabilities are floored at 1e-12 before the log.
    """
    g = granularity if granularity is not None else granularity_for(model)
    sentences = split_sentences(response)
    if not sentences:
        raise ValueError("response has no sentences to score")
    response_tokens = tokenize(response)
    prompt_len = len(tokenize(prompt))
    ids = model.vocab.encode(tokenize(prompt).texts() + response_tokens.texts())
    probs: list[float] = []
    for start, end in sentences:
        idx = last_token_index(response_tokens, start, end)
        if idx is None:
            continue
        logits = model.class_logits_ids(ids[prompt_len + idx : prompt_len + idx + 1])[0]
        p = softmax(logits)
        good = float(p[0]) if g is Granularity.BINARY else float(p[0] + p[2])
        probs.append(good)
    return passage_score_from_probs(probs)


class RewardModel(BaseEstimator):
    """Estimator wrapper over reward training, prediction, and passage scoring."""

    def __init__(
        self,
        density: str = SENTENCE_DENSITY,
        granularity: str = "binary",
        epochs: int = 100,
        learning_rate: float = 0.5,
        embed_dim: int = 32,
        vocab_size: int = 4096,
        seed: int = 0,
    ):
        self.density = density
        self.granularity = granularity
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.embed_dim = embed_dim
        self.vocab_size = vocab_size
        self.seed = seed

    def _config(self) -> RmConfig:
        return RmConfig(
            density=self.density,
            granularity=Granularity(self.granularity),
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def fit(self, records: Sequence[AnnotatedResponse], y=None):
        cfg = self._config()
        texts = [r.prompt for r in records] + [r.response for r in records]
        vocab = Vocabulary.build(texts, self.vocab_size)
        self.scorer_ = Scorer(vocab, self.embed_dim, cfg.granularity.num_classes, self.seed)
        _, self.loss_trace_ = train_rm(self.scorer_, records, cfg)
        return self

    def _check_fitted(self):
        if not hasattr(self, "scorer_"):
            raise NotFittedError("RewardModel is not fitted; call fit() first")

    def predict(self, records: Sequence[AnnotatedResponse]) -> np.ndarray:
        self._check_fitted()
        _, pred = predictions(self.scorer_, records, self._config())
        return pred

    def evaluate(self, records: Sequence[AnnotatedResponse]) -> RmMetrics:
        self._check_fitted()
        return eval_rm(self.scorer_, records, self._config())

    def score_passage(self, prompt: str, response: str) -> PassageScore:
        self._check_fitted()
        if self.density != SENTENCE_DENSITY:
            raise ValueError("passage scoring requires a sentence-density model")
        return score_passage(self.scorer_, prompt, response, Granularity(self.granularity))
