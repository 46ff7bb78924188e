from .config import ModelConfig
from .semantic import builtin_descriptor, load_external_descriptor, semantic_descriptor
from .networks import extract_features, init_params, lines_one_hot, predict_offsets
from .transformer import TokenSet, attention, multiplex_transform, tokenize
from .pipeline import (
    MatchResult,
    SimilarityMatrix,
    inclusion_loss,
    labeling_from_match,
    match_pair,
    propagate_clip,
    propagate_colors,
    reference_regions_from_coloring,
    similarity,
)
from .hu import hu_invariants, hu_match, segment_features
from .train import TrainStats, pair_segment_accuracy, train_toy

__all__ = [
    "ModelConfig",
    "builtin_descriptor",
    "semantic_descriptor",
    "load_external_descriptor",
    "extract_features",
    "init_params",
    "lines_one_hot",
    "predict_offsets",
    "TokenSet",
    "attention",
    "tokenize",
    "multiplex_transform",
    "SimilarityMatrix",
    "similarity",
    "inclusion_loss",
    "MatchResult",
    "propagate_colors",
    "match_pair",
    "propagate_clip",
    "reference_regions_from_coloring",
    "labeling_from_match",
    "hu_invariants",
    "segment_features",
    "hu_match",
    "TrainStats",
    "train_toy",
    "pair_segment_accuracy",
]
