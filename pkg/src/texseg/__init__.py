"""Unsupervised texture segmentation in two stages.

Stage one learns a bank of zero-mean, unit-norm convolution filters whose
responses change little inside a homogeneous texture and sharply across
texture boundaries.  Stage two runs the filtered, whitened feature image
through a vector-valued piecewise-constant Mumford-Shah (Potts) solver and
reads the segment labels off the piecewise-constant result.
"""

from .imagecore import Image, Stencil, load_image, save_image, to_grayscale
from .manifold import FilterBank, load_bank, save_bank
from .learn import LearnParams, LearnResult, cg_learn
from .features import FeatureImage, WhitenOp, apply_filter_bank, nonlinearity
from .potts import PottsProblem, PottsResult, potts_1d, potts_2d_admm, jump_count
from .segment import SegmentResult, extract_labels, merge_small_regions, segment_pipeline
from .metrics import MetricsReport, compare_segmentations

__version__ = "0.1.0"

__all__ = [
    "Image",
    "Stencil",
    "load_image",
    "save_image",
    "to_grayscale",
    "FilterBank",
    "load_bank",
    "save_bank",
    "LearnParams",
    "LearnResult",
    "cg_learn",
    "FeatureImage",
    "WhitenOp",
    "apply_filter_bank",
    "nonlinearity",
    "PottsProblem",
    "PottsResult",
    "potts_1d",
    "potts_2d_admm",
    "jump_count",
    "SegmentResult",
    "extract_labels",
    "merge_small_regions",
    "segment_pipeline",
    "MetricsReport",
    "compare_segmentations",
]
