"""Tiny trainable autoregressive scorer with analytically exact gradients.

The model is a single embedding layer feeding two linear heads: a next-token
projection (for conditional log-probabilities) and a classification head (for
per-token class logits). The hidden state at position ``i`` is the embedding of
token ``i-1`` (a learned start vector at position 0), so the next-token
distribution is a bigram model. All parameters are float64 numpy arrays and
every loss in this package comes with a hand-written backward pass, checkable
against central finite differences via :func:`grad_check`.

Training never touches the embedding table or start vector: reward training
updates the projection and classification head (``REWARD_TRAINABLE``), policy
training only the projection (``POLICY_TRAINABLE``).
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .segmenter import tokenize

UNK_TOKEN = "<unk>"

REWARD_TRAINABLE = ("proj_w", "proj_b", "cls_w", "cls_b")
POLICY_TRAINABLE = ("proj_w", "proj_b")

_MAGIC = b"FSPN"
_CHECKPOINT_VERSION = 1


@dataclass
class Vocabulary:
    """Token-string to id mapping with a dedicated unknown id."""

    token_to_id: dict[str, int]
    unk_id: int

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.id_of(t) for t in tokens], dtype=np.int64)

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int = 4096) -> "Vocabulary":
        """Vocabulary over whitespace tokens of ``texts``.

        Keeps the ``max_size - 1`` most frequent tokens (ties by token string)
        plus the unknown token at id 0; ids are assigned in sorted-token order
        so the mapping is independent of input ordering.
        """
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(tokenize(text).texts())
        kept = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max_size - 1]
        mapping = {UNK_TOKEN: 0}
        for token in sorted(tok for tok, _ in kept):
            if token not in mapping:
                mapping[token] = len(mapping)
        return cls(mapping, 0)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = np.exp(z - z.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


class Scorer:
    """Embedding + next-token projection + classification head.

    Embedding, start vector, and projection are drawn uniformly from
    [-0.1, 0.1) with a seeded generator; the classification head starts at
    zero so an untrained head yields uniform class probabilities.
    """

    PARAM_ORDER = ("embedding", "start", "proj_w", "proj_b", "cls_w", "cls_b")

    def __init__(self, vocab: Vocabulary, embed_dim: int = 32, num_classes: int = 2, seed: int = 0):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        if vocab.size < 1:
            raise ValueError("empty vocabulary")
        self.vocab = vocab
        self.embed_dim = embed_dim
        self.num_classes = num_classes
        rng = np.random.default_rng(seed)
        v, d, c = vocab.size, embed_dim, num_classes
        self.params: dict[str, np.ndarray] = {
            "embedding": rng.uniform(-0.1, 0.1, size=(v, d)),
            "start": rng.uniform(-0.1, 0.1, size=(d,)),
            "proj_w": rng.uniform(-0.1, 0.1, size=(v, d)),
            "proj_b": rng.uniform(-0.1, 0.1, size=(v,)),
            "cls_w": np.zeros((c, d)),
            "cls_b": np.zeros(c),
        }

    # ------------------------------------------------------------------
    # forward passes
    # ------------------------------------------------------------------

    def _prev_hidden(self, ids: np.ndarray, offset: int, count: int) -> np.ndarray:
        """Hidden states conditioning positions ``offset .. offset+count-1``."""
        emb = self.params["embedding"]
        if offset == 0:
            rows = [self.params["start"][None, :]]
            if count > 1:
                rows.append(emb[ids[: count - 1]])
            return np.concatenate(rows, axis=0)
        return emb[ids[offset - 1 : offset + count - 1]]

    def logprob(self, context: Sequence[str], continuation: Sequence[str]) -> float:
        """Sum of next-token conditional log-probabilities of ``continuation``."""
        cont = list(continuation)
        if not cont:
            return 0.0
        ids = self.vocab.encode(list(context) + cont)
        offset = len(ids) - len(cont)
        h = self._prev_hidden(ids, offset, len(cont))
        z = h @ self.params["proj_w"].T + self.params["proj_b"]
        logp = log_softmax(z)
        picked = logp[np.arange(len(cont)), ids[offset:]]
        return float(picked.sum())

    def logprob_and_grad(
        self, context: Sequence[str], continuation: Sequence[str]
    ) -> tuple[float, dict[str, np.ndarray]]:
        """``logprob`` plus its exact gradient with respect to every parameter."""
        grads = self.zero_grads()
        cont = list(continuation)
        if not cont:
            return 0.0, grads
        ids = self.vocab.encode(list(context) + cont)
        offset = len(ids) - len(cont)
        k = len(cont)
        h = self._prev_hidden(ids, offset, k)
        z = h @ self.params["proj_w"].T + self.params["proj_b"]
        logp = log_softmax(z)
        targets = ids[offset:]
        value = float(logp[np.arange(k), targets].sum())

        dz = -softmax(z)
        dz[np.arange(k), targets] += 1.0
        grads["proj_w"] += dz.T @ h
        grads["proj_b"] += dz.sum(axis=0)
        dh = dz @ self.params["proj_w"]
        if offset == 0:
            grads["start"] += dh[0]
            if k > 1:
                np.add.at(grads["embedding"], ids[: k - 1], dh[1:])
        else:
            np.add.at(grads["embedding"], ids[offset - 1 : offset + k - 1], dh)
        return value, grads

    def class_logits_ids(self, ids: np.ndarray) -> np.ndarray:
        h = self.params["embedding"][ids]
        return h @ self.params["cls_w"].T + self.params["cls_b"]

    def class_logits(self, tokens: Sequence[str]) -> np.ndarray:
        """Class logit vector at every token position, shape ``(len(tokens), C)``."""
        return self.class_logits_ids(self.vocab.encode(tokens))

    # ------------------------------------------------------------------
    # bookkeeping
    # ------------------------------------------------------------------

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.params.items()}

    def num_params(self) -> int:
        return sum(arr.size for arr in self.params.values())

    def copy(self) -> "Scorer":
        dup = Scorer.__new__(Scorer)
        dup.vocab = self.vocab
        dup.embed_dim = self.embed_dim
        dup.num_classes = self.num_classes
        dup.params = {name: arr.copy() for name, arr in self.params.items()}
        return dup

    def params_equal(self, other: "Scorer") -> bool:
        return all(np.array_equal(self.params[n], other.params[n]) for n in self.PARAM_ORDER)

    # ------------------------------------------------------------------
    # checkpoint format: magic, version, JSON header, raw little-endian f64
    # ------------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = {
            "version": _CHECKPOINT_VERSION,
            "embed_dim": self.embed_dim,
            "num_classes": self.num_classes,
            "unk_id": self.vocab.unk_id,
            "vocab": self.vocab.token_to_id,
            "params": [
                {"name": name, "shape": list(self.params[name].shape)}
                for name in self.PARAM_ORDER
            ],
        }
        blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(blob)))
            fh.write(blob)
            for name in self.PARAM_ORDER:
                fh.write(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "Scorer":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise ValueError(f"not a scorer checkpoint: bad magic {magic!r}")
            version, header_len = struct.unpack("<II", fh.read(8))
            if version != _CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            header = json.loads(fh.read(header_len).decode("utf-8"))
            model = cls.__new__(cls)
            model.vocab = Vocabulary(dict(header["vocab"]), int(header["unk_id"]))
            model.embed_dim = int(header["embed_dim"])
            model.num_classes = int(header["num_classes"])
            model.params = {}
            for entry in header["params"]:
                shape = tuple(entry["shape"])
                n = int(np.prod(shape)) if shape else 1
                raw = fh.read(8 * n)
                if len(raw) != 8 * n:
                    raise ValueError("truncated checkpoint")
                model.params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        missing = set(cls.PARAM_ORDER) - set(model.params)
        if missing:
            raise ValueError(f"checkpoint missing arrays: {sorted(missing)}")
        return model


@dataclass
class GradientReport:
    """Outcome of comparing analytic gradients against central differences."""

    max_rel_error: float
    checked: list[tuple[str, tuple[int, ...], float, float, float]]
    analytic: dict[str, np.ndarray]


def grad_check(
    model: Scorer,
    loss_and_grad: Callable[[Scorer], tuple[float, dict[str, np.ndarray]]],
    epsilon: float = 1e-4,
    max_checks: int | None = None,
    seed: int = 0,
    loss_fn: Callable[[Scorer], float] | None = None,
) -> GradientReport:
    """Compare ``loss_and_grad``'s gradient to central finite differences.

    Every parameter is perturbed by ``±epsilon`` (or a seeded random subset of
    at least 200 when ``max_checks`` caps the work). Relative error per entry is
    ``|a - f| / (max(|a|, |f|) + 1e-8)``. ``loss_fn``, when given, is used for
    the perturbed evaluations so the backward pass is not re-run needlessly.
    """
    value, analytic = loss_and_grad(model)
    if not np.isfinite(value):
        raise ValueError(f"non-finite loss {value!r}")
    evaluate = loss_fn if loss_fn is not None else (lambda m: loss_and_grad(m)[0])

    coords: list[tuple[str, tuple[int, ...]]] = []
    for name in model.PARAM_ORDER:
        for idx in np.ndindex(model.params[name].shape):
            coords.append((name, idx))
    if max_checks is not None and len(coords) > max_checks:
        count = max(200, max_checks)
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=min(count, len(coords)), replace=False)
        coords = [coords[i] for i in sorted(picked)]

    checked: list[tuple[str, tuple[int, ...], float, float, float]] = []
    max_rel = 0.0
    for name, idx in coords:
        arr = model.params[name]
        original = arr[idx]
        arr[idx] = original + epsilon
        plus = evaluate(model)
        arr[idx] = original - epsilon
        minus = evaluate(model)
        arr[idx] = original
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise ValueError(f"non-finite loss while perturbing {name}{idx}")
        fd = (plus - minus) / (2.0 * epsilon)
        a = float(analytic[name][idx])
        rel = abs(a - fd) / (max(abs(a), abs(fd)) + 1e-8)
        checked.append((name, idx, a, fd, rel))
        max_rel = max(max_rel, rel)
    return GradientReport(max_rel, checked, analytic)
