"""Span-annotated hallucination corpora, reward models, preference training, and selection."""

from .corpus import (
    AnnotatedResponse,
    CorpusError,
    CorpusStats,
    Label,
    SpanAnnotation,
    Violation,
    export,
    ingest,
    stats,
    validate,
)
from .fdpo import (
    ClassMap,
    FdpoConfig,
    FdpoSample,
    FdpoTrainer,
    PreferenceClass,
    build_samples,
    dpo_loss,
    fdpo_loss,
    train_fdpo,
)
from .metrics import EvalRecord, correlate, hallucination_rate, make_eval_record, pearson
from .reward import (
    PassageScore,
    RewardModel,
    RmConfig,
    eval_rm,
    reduce_ternary_to_binary,
    score_passage,
    train_rm,
)
from .scorer import GradientReport, Scorer, Vocabulary, grad_check
from .segmenter import (
    Granularity,
    SentenceSegment,
    Token,
    TokenSequence,
    condense,
    reduce_labels,
    segment_end_tokens,
    split_sentences,
    tokenize,
)
from .selector import Candidate, CandidateSet, SelectionCurve, curve, score_external, select

__version__ = "0.1.0"

__all__ = [
    "AnnotatedResponse",
    "Candidate",
    "CandidateSet",
    "ClassMap",
    "CorpusError",
    "CorpusStats",
    "EvalRecord",
    "FdpoConfig",
    "FdpoSample",
    "FdpoTrainer",
    "GradientReport",
    "Granularity",
    "Label",
    "PassageScore",
    "PreferenceClass",
    "RewardModel",
    "RmConfig",
    "Scorer",
    "SelectionCurve",
    "SentenceSegment",
    "SpanAnnotation",
    "Token",
    "TokenSequence",
    "Violation",
    "Vocabulary",
    "build_samples",
    "condense",
    "correlate",
    "curve",
    "dpo_loss",
    "eval_rm",
    "export",
    "fdpo_loss",
    "grad_check",
    "hallucination_rate",
    "ingest",
    "make_eval_record",
    "pearson",
    "reduce_labels",
    "reduce_ternary_to_binary",
    "score_external",
    "score_passage",
    "segment_end_tokens",
    "select",
    "split_sentences",
    "stats",
    "tokenize",
    "train_fdpo",
    "train_rm",
    "validate",
]
