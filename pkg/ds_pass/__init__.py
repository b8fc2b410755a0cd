"""
DS-PASS: detail-sensitive panoramic annular semantic segmentation.

Annular unfolding, SwaftNet inference, segment-wise network adaptation with
cross-segment padding, mIoU evaluation and semantic match filtering.
"""

from .adaptation import SegmentPlan, adapted_forward, full_pass, partition, run_adapted, seam_report
from .annular_geometry import AnnularCameraModel, fold_back, load_camera_model, unfold
from .errors import (
    ConfigError,
    DataError,
    DSPassError,
    FormatError,
    InvalidInputError,
    InvariantError,
    NoScorableClassesError,
)
from .labels import ClassMap, SegmentationMap, load_class_map

__version__ = "0.1.0"

__all__ = [
    "AnnularCameraModel",
    "ClassMap",
    "ConfigError",
    "DataError",
    "DSPassError",
    "FormatError",
    "InvalidInputError",
    "InvariantError",
    "NoScorableClassesError",
    "SegmentPlan",
    "SegmentationMap",
    "adapted_forward",
    "fold_back",
    "full_pass",
    "load_camera_model",
    "load_class_map",
    "partition",
    "run_adapted",
    "seam_report",
    "unfold",
]
