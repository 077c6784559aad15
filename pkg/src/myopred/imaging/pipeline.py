"""The full crop -> screen -> CLAHE -> high-boost chain."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .enhance import clahe_l, crop_scale, high_boost
from .quality import QualityMetrics, QualityThresholds, QualityVerdict, quality_filter, quality_metrics


@dataclass(frozen=True)
class PreprocessConfig:
    side: int = 64
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)
    clahe_clip: float = 2.0
    clahe_tiles: tuple = (8, 8)
    boost_sigma: float | None = None  # defaults to side / 32
    boost_gain: float = 4.0
    boost_mode: str = "normalize"

    @property
    def sigma(self) -> float:
        return self.boost_sigma if self.boost_sigma is not None else self.side / 32.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clahe_tiles"] = list(self.clahe_tiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        if "thresholds" in d:
            d["thresholds"] = QualityThresholds(**d["thresholds"])
        if "clahe_tiles" in d:
            d["clahe_tiles"] = tuple(d["clahe_tiles"])
        return cls(**d)


class ImageRejected(Exception):
    """Raised when an image fails the F1/F2/F3 screen."""

    def __init__(self, verdict: QualityVerdict, metrics: QualityMetrics):
        super().__init__(f"image rejected: {verdict.describe()}")
        self.verdict = verdict
        self.metrics = metrics


def preprocess(img: np.ndarray, config: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Return the enhanced side x side x 3 float image in [0, 1].

    Raises ImageRejected if the cropped image fails quality screening.
    """
    cropped = crop_scale(img, config.side)
    metrics = quality_metrics(cropped)
    verdict = quality_filter(metrics, config.thresholds)
    if not verdict.passed:
        raise ImageRejected(verdict, metrics)
    equalized = clahe_l(cropped, config.clahe_clip, config.clahe_tiles)
    enhanced = high_boost(equalized, config.sigma, config.boost_gain, config.boost_mode)
    return np.clip(enhanced, 0.0, 1.0)


REJECTION_COLUMNS = ["image_path", "hp_fraction", "lp_fraction", "rb_difference", "failures"]


def write_rejections(path: str | Path, rows: list[tuple[str, ImageRejected]]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REJECTION_COLUMNS)
        for image_path, err in rows:
            m = err.metrics
            writer.writerow([image_path, repr(m.hp_fraction), repr(m.lp_fraction),
                             repr(m.rb_difference), err.verdict.describe()])
