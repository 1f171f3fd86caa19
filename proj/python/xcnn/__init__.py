# SPDX-License-Identifier: Apache-2.0
"""Cross-modal CNN topology compiler.

Turns a base CNN blueprint into a cross-modal CNN (X-CNN): per-modality
super-layers scaled by measured informativeness, weighted cross-connections
at block ends, and a shared classifier. Heavy lifting happens in the C++
core exposed through ``xcnn._core``.
"""

from ._core import (
    XcnnError,
    compute_connection_weights,
    compute_scales,
    find_insertion_points,
    infer_shapes,
    iterate,
    measure_informativeness,
    parameter_count,
    synth_multimodal,
    train_and_evaluate,
    transform,
    validate_blueprint,
)

__all__ = [
    "XcnnError",
    "compute_connection_weights",
    "compute_scales",
    "find_insertion_points",
    "infer_shapes",
    "iterate",
    "measure_informativeness",
    "parameter_count",
    "synth_multimodal",
    "train_and_evaluate",
    "transform",
    "validate_blueprint",
]
