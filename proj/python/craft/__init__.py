"""Temporal link prediction with cross-attention over recent neighbors."""

from ._core import (
    ColdSourceError,
    DataError,
    Dataset,
    Model,
    NeighborIndex,
    bce_loss,
    bench,
    bpr_loss,
    default_config,
    evaluate,
    mean_reciprocal_rank,
    rank_of_positive,
    sha256_hex,
    split_boundaries,
    train,
)

__all__ = [
    "ColdSourceError",
    "DataError",
    "Dataset",
    "Model",
    "NeighborIndex",
    "bce_loss",
    "bench",
    "bpr_loss",
    "default_config",
    "evaluate",
    "mean_reciprocal_rank",
    "rank_of_positive",
    "sha256_hex",
    "split_boundaries",
    "train",
]
