"""Report figures rendered to PNG with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps the PNG bytes stable across runs
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_roc(curves: dict, path) -> Path:
    """``curves`` maps a label to a RocCurve."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for label, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, label=f"{label} (AUC {curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], color="grey", linestyle=":", linewidth=1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    if curves:
        ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def plot_sweep(sweep, path, marks=(-6.0, -0.5)) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(sweep.cutoffs, sweep.accuracy, color="tab:blue")
    for x in marks:
        if sweep.cutoffs.min() <= x <= sweep.cutoffs.max():
            y = sweep.at(x)
            ax.axvline(x, color="grey", linestyle=":", linewidth=1)
            ax.annotate(f"X={x:g}: {y:.3f}", (x, y), textcoords="offset points", xytext=(4, -12), fontsize=8)
    low = sweep.lowest_cutoff
    ax.plot([low], [sweep.at(low)], "o", color="tab:red", label=f"lowest at {low:g} D")
    ax.set_xlabel("Cutoff X (D)")
    ax.set_ylabel("Accuracy")
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def plot_bland_altman(groups: dict, path) -> Path:
    """``groups`` maps a label to a list of (mean, difference) pairs."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, pairs in groups.items():
        if not pairs:
            continue
        arr = np.asarray(pairs, dtype=np.float64)
        ax.scatter(arr[:, 0], arr[:, 1], s=8, alpha=0.6, label=label)
    every = [p for pairs in groups.values() for p in pairs]
    if every:
        diff = np.asarray(every, dtype=np.float64)[:, 1]
        bias, sd = diff.mean(), diff.std(ddof=1) if diff.size > 1 else 0.0
        ax.axhline(bias, color="black", linewidth=1)
        for k in (-1.96, 1.96):
            ax.axhline(bias + k * sd, color="black", linestyle="--", linewidth=0.8)
        ax.legend(fontsize=8)
    ax.set_xlabel("Mean of predicted and true SER (D)")
    ax.set_ylabel("Predicted minus true SER (D)")
    return _save(fig, path)


def plot_training(log: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = [r["epoch"] for r in log]
    ax.plot(epochs, [r["train_loss"] for r in log], label="train loss")
    if log and "val_loss" in log[0]:
        ax.plot(epochs, [r["val_loss"] for r in log], label="validation loss")
    starts = [r["epoch"] for r in log if r["phase_epoch"] == 1][1:]
    for e in starts:
        ax.axvline(e - 0.5, color="grey", linestyle=":", linewidth=1)
    ax.set_yscale("log")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.legend(fontsize=8)
    return _save(fig, path)
