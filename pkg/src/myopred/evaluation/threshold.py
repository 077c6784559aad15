"""Risk classification by thresholding predicted refraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import HIGH_MYOPIA_CUTOFF, MYOPIA_CUTOFF


def threshold_classify(pred_ser, cutoff: float, strict: bool = False):
    """Positive iff pred <= cutoff (or < cutoff when ``strict``); vectorised."""
    pred = np.asarray(pred_ser, dtype=np.float64)
    out = pred < cutoff if strict else pred <= cutoff
    return bool(out) if out.ndim == 0 else out


def myopia_positive(pred_ser):
    return threshold_classify(pred_ser, MYOPIA_CUTOFF)


def high_myopia_positive(pred_ser):
    return threshold_classify(pred_ser, HIGH_MYOPIA_CUTOFF, strict=True)


@dataclass(frozen=True)
class SweepResult:
    cutoffs: np.ndarray
    accuracy: np.ndarray

    @property
    def lowest_cutoff(self) -> float:
        """Cutoff where predicted and true categorisation disagree most."""
        return float(self.cutoffs[int(np.argmin(self.accuracy))])

    def at(self, cutoff: float) -> float:
        idx = int(np.argmin(np.abs(self.cutoffs - cutoff)))
        if abs(self.cutoffs[idx] - cutoff) > 1e-9:
            raise KeyError(f"cutoff {cutoff} not on the grid")
        return float(self.accuracy[idx])


def threshold_sweep(pred_sers, true_sers, grid) -> SweepResult:
    """Agreement between thresholded predictions and thresholded truth per cutoff."""
    pred = np.asarray(pred_sers, dtype=np.float64).ravel()
    true = np.asarray(true_sers, dtype=np.float64).ravel()
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("pred and true must have equal non-zero length")
    if grid.size == 0:
        raise ValueError("empty cutoff grid")
    acc = np.array([np.mean((pred <= x) == (true <= x)) for x in grid])
    return SweepResult(grid, acc)


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:step`` with both ends inclusive, rounded to 10 decimals."""
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError as err:
        raise ValueError(f"grid must look like start:stop:step, got {spec!r}") from err
    if step <= 0 or stop < start:
        raise ValueError(f"bad grid {spec!r}")
    count = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(count), 10)


DEFAULT_GRID = "-8:1:0.1"
