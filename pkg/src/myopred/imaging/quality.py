"""Exposure and colour screening of raw fundus photographs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

F1_BRIGHT = "F1_bright"
F2_DARK = "F2_dark"
F3_COLOR = "F3_color"


def grey(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an H x W x 3 RGB array."""
    img = np.asarray(img, dtype=np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


@dataclass(frozen=True)
class QualityMetrics:
    hp_fraction: float
    lp_fraction: float
    rb_difference: float


@dataclass(frozen=True)
class QualityThresholds:
    hp_max: float = 0.02
    lp_max: float = 0.30
    ys_min: float = 0.0


@dataclass(frozen=True)
class QualityVerdict:
    failures: frozenset = field(default_factory=frozenset)

    @property
    def passed(self) -> bool:
        return not self.failures

    def describe(self) -> str:
        return ";".join(f for f in (F1_BRIGHT, F2_DARK, F3_COLOR) if f in self.failures)


def quality_metrics(img: np.ndarray) -> QualityMetrics:
    """Bright-area share, dark-area share and red-minus-blue grey sum."""
    g = grey(img)
    mu = g.mean()
    sigma = g.std()
    bright_cut = min(mu + 3.0 * sigma, 255.0)
    dark_cut = max(mu - sigma, 5.0)
    img = np.asarray(img)
    rb = int(img[..., 0].astype(np.int64).sum() - img[..., 2].astype(np.int64).sum())
    return QualityMetrics(
        hp_fraction=float(np.mean(g > bright_cut)),
        lp_fraction=float(np.mean(g < dark_cut)),
        rb_difference=float(rb),
    )


def quality_filter(m: QualityMetrics, t: QualityThresholds = QualityThresholds()) -> QualityVerdict:
    failures = set()
    if m.hp_fraction > t.hp_max:
        failures.add(F1_BRIGHT)
    if m.lp_fraction > t.lp_max:
        failures.add(F2_DARK)
    if m.rb_difference < t.ys_min:
        failures.add(F3_COLOR)
    return QualityVerdict(frozenset(failures))
