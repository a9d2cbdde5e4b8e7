"""Positional-bias audits for dual-encoder models.

Thin wrappers over the compiled core. Structured results are plain dicts.
"""

import json
import os

from . import _posbias
from ._posbias import (
    ProviderError,
    RunInterrupted,
    ValidationError,
    coefficient_of_variation,
    content_key,
    image_variants,
    interpolate_to_scale,
    lorem_variants,
    mean_fill_color,
    mock_embedding,
    mock_tokenize,
    preprocess_image,
    recall_at_k,
    resize_bicubic,
    shuffle_caption,
    split_sub_captions,
    text_variants,
    top1_accuracy,
    write_synthetic_dataset,
)

__all__ = [
    "ProviderError",
    "RunInterrupted",
    "ValidationError",
    "coefficient_of_variation",
    "content_key",
    "image_variants",
    "interpolate_to_scale",
    "lorem_variants",
    "mean_fill_color",
    "mock_embedding",
    "mock_info",
    "mock_tokenize",
    "preprocess_image",
    "recall_at_k",
    "resize_bicubic",
    "run_audit",
    "shuffle_caption",
    "split_sub_captions",
    "text_plan",
    "text_variants",
    "top1_accuracy",
    "write_synthetic_dataset",
]


def mock_info():
    """Model contract of the built-in deterministic mock provider."""
    return json.loads(_posbias.mock_info_json())


def text_plan(interior, num_segments, schedule="step-equal", num_positions=None, positions=()):
    return json.loads(
        _posbias.text_plan_json(list(interior), num_segments, schedule, num_positions, list(positions))
    )


def run_audit(config, base_dir=".", resume=False, cache_dir=None):
    """Run an audit from a config dict. Relative paths resolve against base_dir."""
    out = _posbias.run_audit_json(
        json.dumps(config), os.fspath(base_dir), resume, None if cache_dir is None else os.fspath(cache_dir)
    )
    return json.loads(out)
