"""Pairwise DPO loss and its fine-grained per-segment variant, plus the trainer.

Instead of whole-response preference pairs, the fine-grained loss walks the
labeled chunks of a single response: each chunk's log-probability ratio between
the policy and a frozen reference is pushed up (preferred), pushed down
(dispreferred), or left alone (neutral). Neutral chunks are removed before any
arithmetic, so they contribute exactly zero to both the loss and its gradient.

Chunk preference comes from the annotation label through a class map with two
modes: ``ia`` leaves analysis chunks neutral, ``da`` treats them as
dispreferred. Accurate is always preferred; inaccurate and unsure always
dispreferred.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import AnnotatedResponse, Label
from .scorer import POLICY_TRAINABLE, Scorer, Vocabulary
from .segmenter import majority_label, tokenize

IA_MODE = "ia"
DA_MODE = "da"


class PreferenceClass(IntEnum):
    DISPREFERRED = 0
    PREFERRED = 1
    NEUTRAL = 2


@dataclass(frozen=True)
class ClassMap:
    """Annotation label to preference class, in ``ia`` or ``da`` mode."""

    mode: str

    def __post_init__(self):
        if self.mode not in (IA_MODE, DA_MODE):
            raise ValueError(f"unknown class map mode {self.mode!r}")

    def preference_of(self, label: Label) -> PreferenceClass:
        if label is Label.ACCURATE:
            return PreferenceClass.PREFERRED
        if label is Label.ANALYSIS:
            return PreferenceClass.NEUTRAL if self.mode == IA_MODE else PreferenceClass.DISPREFERRED
        return PreferenceClass.DISPREFERRED


@dataclass(frozen=True)
class FdpoSample:
    """One contiguous labeled chunk: context tokens, chunk tokens, preference."""

    context: tuple[str, ...]
    segment: tuple[str, ...]
    preference: PreferenceClass


def build_samples(record: AnnotatedResponse, class_map: ClassMap) -> list[FdpoSample]:
    """Chunk a response into maximal same-label token runs.

    Each response token takes the label covering the majority of its characters
    (gaps count as accurate); consecutive tokens with equal labels form one
    chunk whose context is the prompt plus all preceding response tokens, so
    concatenating the chunks reconstructs the response token stream.
    """
    prompt_tokens = tuple(tokenize(record.prompt).texts())
    response_tokens = tokenize(record.response)
    labels = [majority_label(t.start, t.end, record.spans) for t in response_tokens]

    samples: list[FdpoSample] = []
    context = prompt_tokens
    i = 0
    while i < len(labels):
        j = i
        while j < len(labels) and labels[j] == labels[i]:
            j += 1
        chunk = tuple(t.text for t in response_tokens.tokens[i:j])
        samples.append(FdpoSample(context, chunk, class_map.preference_of(labels[i])))
        context = context + chunk
        i = j
    return samples


def _sigmoid(x: float) -> float:
    return 0.5 * (1.0 + math.tanh(0.5 * x))


def _softplus(x: float) -> float:
    # log(1 + e^x), stable for large |x|
    return float(np.logaddexp(0.0, x))


def dpo_loss(
    policy: Scorer,
    reference: Scorer,
    context: Sequence[str],
    preferred: Sequence[str],
    dispreferred: Sequence[str],
    beta: float,
) -> float:
    """Pairwise preference loss ``-log sigmoid(delta)`` on two continuations."""
    if tuple(preferred) == tuple(dispreferred):
        raise ValueError("preferred and dispreferred continuations must differ")
    delta = beta * (
        (policy.logprob(context, preferred) - reference.logprob(context, preferred))
        - (policy.logprob(context, dispreferred) - reference.logprob(context, dispreferred))
    )
    if not np.isfinite(delta):
        raise ValueError("non-finite log-probability in pairwise loss")
    return _softplus(-delta)


def dpo_loss_and_grad(
    policy: Scorer,
    reference: Scorer,
    context: Sequence[str],
    preferred: Sequence[str],
    dispreferred: Sequence[str],
    beta: float,
) -> tuple[float, dict[str, np.ndarray]]:
    if tuple(preferred) == tuple(dispreferred):
        raise ValueError("preferred and dispreferred continuations must differ")
    lp_w, g_w = policy.logprob_and_grad(context, preferred)
    lp_l, g_l = policy.logprob_and_grad(context, dispreferred)
    delta = beta * (
        (lp_w - reference.logprob(context, preferred))
        - (lp_l - reference.logprob(context, dispreferred))
    )
    if not np.isfinite(delta):
        raise ValueError("non-finite log-probability in pairwise loss")
    coef = -beta * _sigmoid(-delta)
    grads = policy.zero_grads()
    for name in grads:
        grads[name] += coef * (g_w[name] - g_l[name])
    return _softplus(-delta), grads


def log_ratio(policy: Scorer, reference: Scorer, sample: FdpoSample) -> float:
    """Policy-vs-reference log-probability ratio of one chunk."""
    return policy.logprob(sample.context, sample.segment) - reference.logprob(
        sample.context, sample.segment
    )


@dataclass(frozen=True)
class FdpoBatchLoss:
    """Mean per-segment loss over the non-neutral segments of a batch."""

    value: float
    active_segments: int

    @property
    def empty(self) -> bool:
        """True when the batch had no non-neutral segment (loss defined as 0)."""
        return self.active_segments == 0


def _segment_sign(preference: PreferenceClass) -> float:
    return 1.0 if preference is PreferenceClass.PREFERRED else -1.0


def fdpo_loss(
    policy: Scorer, reference: Scorer, samples: Sequence[FdpoSample], beta: float
) -> FdpoBatchLoss:
    """Fine-grained loss: mean of ``-log sigmoid(beta * k)`` per active segment.

    ``k`` is the chunk's log-ratio for preferred chunks and its negation for
    dispreferred chunks; neutral chunks are excluded from both the sum and the
    denominator.
    """
    active = [s for s in samples if s.preference is not PreferenceClass.NEUTRAL]
    if not active:
        return FdpoBatchLoss(0.0, 0)
    total = 0.0
    for sample in active:
        r = log_ratio(policy, reference, sample)
        if not np.isfinite(r):
            raise ValueError("non-finite log-probability ratio")
        total += _softplus(-beta * _segment_sign(sample.preference) * r)
    return FdpoBatchLoss(total / len(active), len(active))


def fdpo_loss_and_grad(
    policy: Scorer, reference: Scorer, samples: Sequence[FdpoSample], beta: float
) -> tuple[FdpoBatchLoss, dict[str, np.ndarray]]:
    grads = policy.zero_grads()
    active = [s for s in samples if s.preference is not PreferenceClass.NEUTRAL]
    if not active:
        return FdpoBatchLoss(0.0, 0), grads
    total = 0.0
    for sample in active:
        lp, g = policy.logprob_and_grad(sample.context, sample.segment)
        r = lp - reference.logprob(sample.context, sample.segment)
        if not np.isfinite(r):
            raise ValueError("non-finite log-probability ratio")
        sign = _segment_sign(sample.preference)
        t = beta * sign * r
        total += _softplus(-t)
        coef = -beta * sign * _sigmoid(-t) / len(active)
        for name in grads:
            grads[name] += coef * g[name]
    return FdpoBatchLoss(total / len(active), len(active)), grads


@dataclass
class FdpoConfig:
    """Training recipe: logistic temperature, epochs, and LR schedule."""

    beta: float = 0.5
    epochs: int = 5
    learning_rate: float = 1e-6
    warmup_ratio: float = 0.03
    schedule: str = "cosine"
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 <= self.warmup_ratio < 1:
            raise ValueError("warmup_ratio must be in [0, 1)")
        if self.schedule != "cosine":
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def learning_rate_at(step: int, total_steps: int, cfg: FdpoConfig) -> float:
    """Linear warmup to the configured rate, then cosine decay to zero."""
    if total_steps <= 0:
        return 0.0
    warmup = math.ceil(cfg.warmup_ratio * total_steps)
    if step < warmup:
        return cfg.learning_rate * step / warmup
    span = total_steps - warmup
    if span <= 0:
        return cfg.learning_rate
    progress = (step - warmup) / span
    return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))


class FdpoDivergenceError(RuntimeError):
    """Training hit a non-finite loss; the message names the offending batch."""


def train_fdpo(
    policy: Scorer,
    reference: Scorer,
    records: Sequence[AnnotatedResponse],
    class_map: ClassMap,
    cfg: FdpoConfig,
) -> tuple[Scorer, list[float]]:
    """Minibatch gradient descent on the fine-grained loss.

    Batches are whole responses; only the next-token projection is updated and
    batches with no active segment are skipped, leaving parameters bit-for-bit
    untouched. Returns the policy and the per-epoch segment-weighted mean loss.
    """
    per_response = [build_samples(r, class_map) for r in records]
    per_response = [samples for samples in per_response if samples]
    rng = random.Random(cfg.seed)
    n_batches = math.ceil(len(per_response) / cfg.batch_size) if per_response else 0
    total_steps = cfg.epochs * n_batches

    trace: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = list(range(len(per_response)))
        rng.shuffle(order)
        epoch_sum = 0.0
        epoch_active = 0
        for b in range(n_batches):
            chunk = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            samples = [s for i in chunk for s in per_response[i]]
            try:
                batch_loss, grads = fdpo_loss_and_grad(policy, reference, samples, cfg.beta)
            except ValueError as exc:
                raise FdpoDivergenceError(f"epoch {epoch}, batch {b}: {exc}") from None
            if not np.isfinite(batch_loss.value):
                raise FdpoDivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            lr = learning_rate_at(step, total_steps, cfg)
            step += 1
            if batch_loss.active_segments:
                for name in POLICY_TRAINABLE:
                    policy.params[name] -= lr * grads[name]
                epoch_sum += batch_loss.value * batch_loss.active_segments
                epoch_active += batch_loss.active_segments
        trace.append(epoch_sum / epoch_active if epoch_active else 0.0)
    return policy, trace


class FdpoTrainer(BaseEstimator):
    """Estimator wrapper: ``fit`` optimizes a policy against a frozen copy.

    After fitting, ``policy_`` holds the trained scorer, ``reference_`` the
    frozen starting point, and ``loss_trace_`` the per-epoch loss.
    """

    def __init__(
        self,
        mode: str = IA_MODE,
        beta: float = 0.5,
        epochs: int = 5,
        learning_rate: float = 1e-6,
        warmup_ratio: float = 0.03,
        batch_size: int = 4,
        embed_dim: int = 32,
        vocab_size: int = 4096,
        seed: int = 0,
    ):
        self.mode = mode
        self.beta = beta
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.warmup_ratio = warmup_ratio
        self.batch_size = batch_size
        self.embed_dim = embed_dim
        self.vocab_size = vocab_size
        self.seed = seed

    def fit(self, records: Sequence[AnnotatedResponse], base: Scorer | None = None):
        if base is None:
            texts = [r.prompt for r in records] + [r.response for r in records]
            vocab = Vocabulary.build(texts, self.vocab_size)
            base = Scorer(vocab, self.embed_dim, num_classes=2, seed=self.seed)
        self.policy_ = base.copy()
        self.reference_ = base.copy()
        cfg = FdpoConfig(
            beta=self.beta,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            warmup_ratio=self.warmup_ratio,
            batch_size=self.batch_size,
            seed=self.seed,
        )
        _, self.loss_trace_ = train_fdpo(
            self.policy_, self.reference_, records, ClassMap(self.mode), cfg
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "policy_"):
            raise NotFittedError("FdpoTrainer is not fitted; call fit() first")

    def segment_log_ratios(
        self, record: AnnotatedResponse
    ) -> list[tuple[FdpoSample, float]]:
        """Per-chunk log-ratio of the trained policy on one record."""
        self._check_fitted()
        samples = build_samples(record, ClassMap(self.mode))
        return [(s, log_ratio(self.policy_, self.reference_, s)) for s in samples]
