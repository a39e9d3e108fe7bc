"""Indoor place recognition: semantic KP-Conv encoder, attention-guided
descriptors, and exact nearest-neighbor retrieval over synthetic rooms."""

from ._core import (
    AegisError,
    build_db,
    config_hash,
    describe_file,
    evaluate,
    generate,
    gradient_suite,
    grid_subsample,
    is_negative,
    is_positive,
    kernel_points,
    l2_normalize,
    lazy_quadruplet_loss,
    load_manifest,
    mine_tuple,
    query,
    radius_neighbors,
    set_threads,
    softmax,
    train_embed,
    train_seg,
)

__all__ = [
    "AegisError",
    "build_db",
    "config_hash",
    "describe_file",
    "evaluate",
    "generate",
    "gradient_suite",
    "grid_subsample",
    "is_negative",
    "is_positive",
    "kernel_points",
    "l2_normalize",
    "lazy_quadruplet_loss",
    "load_manifest",
    "mine_tuple",
    "query",
    "radius_neighbors",
    "set_threads",
    "softmax",
    "train_embed",
    "train_seg",
]
