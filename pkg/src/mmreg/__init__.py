"""Multi-modal image registration: phase-congruency keypoints, LogGabor WPMOM
orientation features, GGLOH-style descriptors and multi-scale consensus matching."""

from .config import PipelineConfig, load_config
from .image import build_pyramid, load_image, preprocess
from .matching import (DegenerateInputError, Match, MatchResult, NoConsensusError, Transform,
                       compute_ncm, estimate_transform, fsc_filter, nn_match)
from .pipeline import multiscale_match, register

__all__ = [
    "DegenerateInputError", "Match", "MatchResult", "NoConsensusError", "PipelineConfig",
    "Transform", "build_pyramid", "compute_ncm", "estimate_transform", "fsc_filter",
    "load_config", "load_image", "multiscale_match", "nn_match", "preprocess", "register",
]
