"""Autoregressive triangle-mesh generation with a learned quantized triangle
vocabulary: mesh sequencing and discretization, the residual-quantized
triangle codec, a decoder-only transformer, and shape-set metrics."""

from ._meshgpt import (
    CheckpointError,
    Codec,
    ConfigError,
    DiscreteMesh,
    Gpt,
    Mesh,
    MeshError,
    augment,
    canonicalize,
    chamfer,
    compactness,
    config_defaults,
    discretize,
    eval_dirs,
    gen_data,
    generate_mesh,
    grad_check,
    load_obj,
    merge_vertices,
    normalize,
    roundtrip,
    sample_surface_points,
    save_obj,
    shape_set_metrics,
    synthetic_mesh,
    train_codec,
    train_gpt,
    triangle_accuracy,
    undiscretize,
    validate,
)

__all__ = [
    "CheckpointError",
    "Codec",
    "ConfigError",
    "DiscreteMesh",
    "Gpt",
    "Mesh",
    "MeshError",
    "augment",
    "canonicalize",
    "chamfer",
    "compactness",
    "config_defaults",
    "discretize",
    "eval_dirs",
    "gen_data",
    "generate_mesh",
    "grad_check",
    "load_obj",
    "merge_vertices",
    "normalize",
    "roundtrip",
    "sample_surface_points",
    "save_obj",
    "shape_set_metrics",
    "synthetic_mesh",
    "train_codec",
    "train_gpt",
    "triangle_accuracy",
    "undiscretize",
    "validate",
]

__version__ = "0.1.0"
