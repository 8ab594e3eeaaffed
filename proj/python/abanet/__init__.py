"""Span-extraction reading comprehension with adaptive bidirectional attention."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    Error,
    NumericalError,
    decode_span,
    evaluate,
    exact_match,
    f1_score,
    file_digest,
    generate,
    grad_check_ops,
    normalize_answer,
    predict,
    profile_settings,
    run_cli,
    score_answers,
    squash,
    survival_probability,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "NumericalError",
    "decode_span",
    "evaluate",
    "exact_match",
    "f1_score",
    "file_digest",
    "generate",
    "grad_check_ops",
    "normalize_answer",
    "predict",
    "profile_settings",
    "run_cli",
    "score_answers",
    "squash",
    "survival_probability",
    "train",
]
