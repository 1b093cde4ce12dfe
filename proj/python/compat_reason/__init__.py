"""Outfit judgment and reason tracing (Python bindings of the C++ core)."""

from ._core import (
    Model,
    Record,
    color_feature,
    explain_sentence,
    foco_quantize,
    generate_dataset,
    load_records,
    parse_record,
    rgb_to_hsb,
    save_records,
    selfcheck,
    train,
)

__all__ = [
    "Model",
    "Record",
    "color_feature",
    "explain_sentence",
    "foco_quantize",
    "generate_dataset",
    "load_records",
    "parse_record",
    "rgb_to_hsb",
    "save_records",
    "selfcheck",
    "train",
]
