"""Quantization-aware training of small super-resolution networks."""

from ._core import (
    AccountingError,
    ConfigError,
    Error,
    FormatError,
    NumericError,
    RunConfig,
    analyze,
    complexity,
    evaluate,
    fake_quantize,
    pretrain,
    quality,
    train,
)

__all__ = [
    "AccountingError",
    "ConfigError",
    "Error",
    "FormatError",
    "NumericError",
    "RunConfig",
    "analyze",
    "complexity",
    "evaluate",
    "fake_quantize",
    "pretrain",
    "quality",
    "train",
]
