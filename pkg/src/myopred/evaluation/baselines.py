"""Baseline-SER comparison models: OLS regression and logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import confusion, mae, roc_auc


def _check_x(x, min_n: int = 3) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} observations, got {x.size}")
    if np.ptp(x) == 0.0:
        raise ValueError("baseline SER has zero variance")
    return x


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    mae: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept


def linear_baseline(x, y) -> LinearFit:
    """Closed-form least squares y ~ slope * x + intercept."""
    x = _check_x(x)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != x.shape:
        raise ValueError("x and y differ in length")
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    return LinearFit(slope, intercept, mae(slope * x + intercept, y))


@dataclass(frozen=True)
class LogisticFit:
    weight: float
    bias: float
    steps: int
    loss: float
    metrics: dict

    def predict_proba(self, x):
        return 1.0 / (1.0 + np.exp(-(self.weight * np.asarray(x, dtype=np.float64) + self.bias)))


def _bce(p, y):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def logistic_baseline(x, labels, lr: float = 1.0, tol: float = 1e-10, max_steps: int = 100_000) -> LogisticFit:
    """Gradient descent on mean cross-entropy until |delta loss| < tol or max_steps."""
    x = _check_x(x)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.shape != x.shape:
        raise ValueError("x and labels differ in length")
    mu, sd = x.mean(), x.std()
    xs = (x - mu) / sd
    w = b = 0.0
    prev = _bce(np.full_like(y, 0.5), y)
    steps = 0
    with np.errstate(over="ignore"):
        for steps in range(1, max_steps + 1):
            p = 1.0 / (1.0 + np.exp(-(w * xs + b)))
            err = p - y
            w -= lr * float(np.mean(err * xs))
            b -= lr * float(np.mean(err))
            loss = _bce(1.0 / (1.0 + np.exp(-(w * xs + b))), y)
            if abs(prev - loss) < tol:
                break
            prev = loss
    weight, bias = w / sd, b - w * mu / sd
    fit = LogisticFit(weight, bias, steps, loss, {})
    return LogisticFit(weight, bias, steps, loss, logistic_metrics(fit, x, y))


def logistic_metrics(fit: LogisticFit, x, labels) -> dict:
    """Accuracy/sensitivity/specificity at p = 0.5 and AUC (None when undefined)."""
    labels = np.asarray(labels, dtype=np.float64).ravel() > 0.5
    with np.errstate(over="ignore"):
        probs = fit.predict_proba(x)
    cm = confusion(probs, labels, 0.5)
    try:
        auc = roc_auc(probs, labels).auc
    except ValueError:
        auc = None
    return {"accuracy": cm.accuracy, "sensitivity": cm.sensitivity,
            "specificity": cm.specificity, "auc": auc}
