"""Associative watermarking: bipolar associative memories, their macroscopic
theory, DCT sign features, image attacks and experiment drivers."""

from awm.attacks import JpegParams, NoiseParams, gaussian_attack, jpeg_attack
from awm.memory import (
    AutoWeights,
    HeteroWeights,
    PatternStore,
    RecallTrace,
    amm_recall,
    awm_recall,
    train_auto,
    train_hetero,
)
from awm.patterns import (
    DimensionError,
    PatternError,
    degrade_to_overlap,
    overlap,
    random_bipolar,
    sgn,
)
from awm.theory import (
    TheoryParams,
    critical_overlap,
    equilibrium_overlap,
    storage_capacity,
    trajectory,
)
from awm.watermark import extract_features, info_cost_awm, info_cost_zero, zw_extract, zw_map

__version__ = "0.1.0"

__all__ = [
    "AutoWeights",
    "DimensionError",
    "HeteroWeights",
    "JpegParams",
    "NoiseParams",
    "PatternError",
    "PatternStore",
    "RecallTrace",
    "TheoryParams",
    "amm_recall",
    "awm_recall",
    "critical_overlap",
    "degrade_to_overlap",
    "equilibrium_overlap",
    "extract_features",
    "gaussian_attack",
    "info_cost_awm",
    "info_cost_zero",
    "jpeg_attack",
    "overlap",
    "random_bipolar",
    "sgn",
    "storage_capacity",
    "train_auto",
    "train_hetero",
    "trajectory",
    "zw_extract",
    "zw_map",
]
