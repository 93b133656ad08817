"""Melanoma image analysis: hair removal, lesion segmentation, ABCD features and an MLP classifier."""

__version__ = "0.1.0"

from .evaluate import PhantomSpec, border_error, generate_phantom, render_phantom, standard_suite
from .features import FeatureVector, extract_features
from .preprocess import remove_hair
from .segment import SegmentationConfig, segment

__all__ = [
    "PhantomSpec", "border_error", "generate_phantom", "render_phantom", "standard_suite",
    "FeatureVector", "extract_features", "remove_hair", "SegmentationConfig", "segment",
]
