"""Refraction arithmetic, myopia categories and progression labels.

Sign convention: diopters, more negative is more myopic.  A myopic shift
between two annual visits is a negative change in spherical equivalent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

MYOPIA_CUTOFF = -0.5
MODERATE_CUTOFF = -3.0
HIGH_MYOPIA_CUTOFF = -6.0
HYPEROPIA_CUTOFF = 3.0

RAPID_PROGRESSION = 0.75  # D/year
NON_PROGRESSION = 0.50  # D/year


class MyopiaCategory(enum.Enum):
    HIGH_MYOPIA = "HighMyopia"
    MODERATE_MYOPIA = "ModerateMyopia"
    LOW_MYOPIA = "LowMyopia"
    EMMETROPIA_OR_LOW_HYPEROPIA = "EmmetropiaOrLowHyperopia"
    HYPEROPIA = "Hyperopia"

    @property
    def myopic(self) -> bool:
        return self in _MYOPIC


_MYOPIC = frozenset(
    {MyopiaCategory.HIGH_MYOPIA, MyopiaCategory.MODERATE_MYOPIA, MyopiaCategory.LOW_MYOPIA}
)


class ProgressionLabel(enum.Enum):
    RAPID = "Rapid"
    INTERMEDIATE = "Intermediate"
    NON_PROGRESSIVE = "NonProgressive"


@dataclass(frozen=True)
class Refraction:
    """Sphere / cylinder / axis as written on a refraction card."""

    sphere: float
    cylinder: float
    axis: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sphere) and math.isfinite(self.cylinder)):
            raise ValueError(f"non-finite refraction: {self.sphere}, {self.cylinder}")
        if not (0.0 <= self.axis < 180.0):
            raise ValueError(f"axis must lie in [0, 180), got {self.axis}")

    @property
    def ser(self) -> float:
        return spherical_equivalent(self)


def _check_finite(value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite SER: {value}")
    return value


def spherical_equivalent(r: Refraction) -> float:
    if not (math.isfinite(r.sphere) and math.isfinite(r.cylinder)):
        raise ValueError("non-finite refraction")
    return r.sphere + r.cylinder / 2.0


def classify_ser(ser: float) -> MyopiaCategory:
    """Map an SER onto the five clinical bands.

    -6.0 and -3.0 both fall in the moderate band; -0.5 is low myopia.
    """
    ser = _check_finite(ser)
    if ser < HIGH_MYOPIA_CUTOFF:
        return MyopiaCategory.HIGH_MYOPIA
    if ser <= MODERATE_CUTOFF:
        return MyopiaCategory.MODERATE_MYOPIA
    if ser <= MYOPIA_CUTOFF:
        return MyopiaCategory.LOW_MYOPIA
    if ser <= HYPEROPIA_CUTOFF:
        return MyopiaCategory.EMMETROPIA_OR_LOW_HYPEROPIA
    return MyopiaCategory.HYPEROPIA


def is_myopic(ser: float) -> bool:
    return ser <= MYOPIA_CUTOFF


def is_high_myopic(ser: float) -> bool:
    return ser < HIGH_MYOPIA_CUTOFF


def annual_progression(prev: float, next: float) -> float:
    return next - prev


def progression_label(deltas: Sequence[float], myopic: bool) -> ProgressionLabel:
    """Label a child's progression from annual SER changes.

    Progression magnitude is the mean myopic shift, ``-mean(deltas)``.  The
    rapid band only applies to children who are already myopic.
    """
    if len(deltas) == 0:
        raise ValueError("progression_label needs at least one annual change")
    magnitude = -sum(deltas) / len(deltas)
    if myopic and magnitude > RAPID_PROGRESSION:
        return ProgressionLabel.RAPID
    if magnitude < NON_PROGRESSION:
        return ProgressionLabel.NON_PROGRESSIVE
    return ProgressionLabel.INTERMEDIATE
