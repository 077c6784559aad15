"""Fundus image screening and enhancement."""

from .enhance import (
    augment_flip,
    clahe,
    clahe_l,
    clahe_lab,
    crop_scale,
    gaussian_blur,
    gaussian_kernel,
    high_boost,
    minmax_normalize,
    resize_bilinear,
)
from .io import read_png, write_png
from .pipeline import ImageRejected, PreprocessConfig, preprocess, write_rejections
from .quality import (
    F1_BRIGHT,
    F2_DARK,
    F3_COLOR,
    QualityMetrics,
    QualityThresholds,
    QualityVerdict,
    grey,
    quality_filter,
    quality_metrics,
)
