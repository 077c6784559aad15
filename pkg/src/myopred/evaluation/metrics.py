"""Regression error, confusion-matrix rates and ROC analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _pair(pred, true):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    true = np.asarray(true, dtype=np.float64).ravel()
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError(f"need equal non-empty lengths, got {pred.size} and {true.size}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(true))):
        raise ValueError("non-finite values in pred or true")
    return pred, true


def mae(pred, true) -> float:
    pred, true = _pair(pred, true)
    return float(np.mean(np.abs(pred - true)))


def r2(pred, true) -> float:
    """1 - SS_res / SS_tot; raises ValueError when the truth is constant."""
    pred, true = _pair(pred, true)
    ss_tot = float(np.sum((true - true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r2 undefined: true values have zero variance")
    return 1.0 - float(np.sum((true - pred) ** 2)) / ss_tot


def _ratio(num: int, den: int):
    return None if den == 0 else num / den


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self):
        return _ratio(self.tp + self.tn, self.total)

    @property
    def sensitivity(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def specificity(self):
        return _ratio(self.tn, self.tn + self.fp)


def confusion_from_predictions(predicted, labels) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=bool).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    return ConfusionMatrix(
        tp=int(np.sum(predicted & labels)),
        fp=int(np.sum(predicted & ~labels)),
        tn=int(np.sum(~predicted & ~labels)),
        fn=int(np.sum(~predicted & labels)),
    )


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Positive iff score >= threshold.  Undefined rates come back as None."""
    return confusion_from_predictions(np.asarray(scores, dtype=np.float64) >= threshold, labels)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[i] produces point i + 1
    auc: float


def _class_counts(labels):
    labels = np.asarray(labels, dtype=bool).ravel()
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    return labels, pos, neg


def rank_auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels, pos, neg = _class_counts(labels)
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    twice_ranks = np.empty(scores.size, dtype=np.int64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # midrank of 1-based ranks i+1..j+1, doubled to stay integral
        twice_ranks[order[i : j + 1]] = (i + 1) + (j + 1)
        i = j + 1
    twice_u = int(twice_ranks[labels].sum()) - pos * (pos + 1)
    return twice_u / (2 * pos * neg)


def roc_auc(scores, labels) -> RocCurve:
    """ROC over every distinct score threshold, area by the trapezoid rule.

    The area is checked against the rank statistic before returning.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels, pos, neg = _class_counts(labels)
    if scores.size != labels.size:
        raise ValueError("scores and labels differ in length")
    thresholds = np.unique(scores)[::-1]
    tp = np.array([0] + [int(np.sum(labels & (scores >= t))) for t in thresholds], dtype=np.int64)
    fp = np.array([0] + [int(np.sum(~labels & (scores >= t))) for t in thresholds], dtype=np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * pos * neg)
    check = rank_auc(scores, labels)
    if abs(auc - check) > 1e-12:
        raise ArithmeticError(f"trapezoid AUC {auc} disagrees with rank AUC {check}")
    return RocCurve(fp / neg, tp / pos, thresholds, auc)
