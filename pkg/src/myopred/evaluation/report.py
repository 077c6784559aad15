"""Per-model metric rows, subgroup analysis and CSV/JSON writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import confusion, confusion_from_predictions, mae, r2, roc_auc
from .threshold import SweepResult, high_myopia_positive, myopia_positive

UNDEFINED = "undefined"

METRIC_COLUMNS = (
    "Model",
    "MAE /D",
    "R2",
    "Myopia Trained Accuracy",
    "Myopia Trained Sensitivity",
    "Myopia Trained Specificity",
    "Myopia Trained AUC",
    "Myopia Threshold Accuracy",
    "Myopia Threshold Sensitivity",
    "Myopia Threshold Specificity",
    "High Myopia Trained Accuracy",
    "High Myopia Trained Sensitivity",
    "High Myopia Trained Specificity",
    "High Myopia Trained AUC",
    "High Myopia Threshold Accuracy",
    "High Myopia Threshold Sensitivity",
    "High Myopia Threshold Specificity",
    # not in the published table; AUC of the negated predicted SER
    "Myopia Threshold AUC",
    "High Myopia Threshold AUC",
    "Num",
)


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated sample: model outputs next to ground truth."""

    sample_id: str
    sex: str
    baseline_myopic: bool
    pred_sers: tuple
    true_sers: tuple
    p_myopia: float
    p_high_myopia: float
    label_myopia: bool
    label_high_myopia: bool


def eval_records(samples, predictions) -> list[EvalRecord]:
    if len(samples) != len(predictions):
        raise ValueError("samples and predictions differ in length")
    return [
        EvalRecord(s.key, s.sex, s.baseline_myopic, tuple(p.predicted_sers), tuple(s.target_sers),
                   p.p_myopia, p.p_high_myopia, s.label_myopia_at_horizon, s.label_high_myopia_at_horizon)
        for s, p in zip(samples, predictions)
    ]


def _maybe(fn, *args):
    try:
        return fn(*args)
    except ValueError:
        return None


def _auc(scores, labels):
    curve = _maybe(roc_auc, scores, labels)
    return None if curve is None else curve.auc


def compute_metrics(records: list[EvalRecord], model: str = "") -> dict:
    """One metrics row keyed by METRIC_COLUMNS; undefined cells are None."""
    if not records:
        raise ValueError("no records to evaluate")
    pred = np.array([r.pred_sers for r in records], dtype=np.float64)
    true = np.array([r.true_sers for r in records], dtype=np.float64)
    horizon_pred = pred[:, -1]
    row = {"Model": model, "MAE /D": mae(pred, true), "R2": _maybe(r2, pred, true), "Num": len(records)}
    for prefix, probs, labels, positive in (
        ("Myopia", [r.p_myopia for r in records], [r.label_myopia for r in records], myopia_positive),
        ("High Myopia", [r.p_high_myopia for r in records], [r.label_high_myopia for r in records],
         high_myopia_positive),
    ):
        trained = confusion(probs, labels, 0.5)
        thresh = confusion_from_predictions(positive(horizon_pred), labels)
        row[f"{prefix} Trained Accuracy"] = trained.accuracy
        row[f"{prefix} Trained Sensitivity"] = trained.sensitivity
        row[f"{prefix} Trained Specificity"] = trained.specificity
        row[f"{prefix} Trained AUC"] = _auc(probs, labels)
        row[f"{prefix} Threshold Accuracy"] = thresh.accuracy
        row[f"{prefix} Threshold Sensitivity"] = thresh.sensitivity
        row[f"{prefix} Threshold Specificity"] = thresh.specificity
        row[f"{prefix} Threshold AUC"] = _auc(-horizon_pred, labels)
    return row


def average_rows(rows: list[dict]) -> list[dict]:
    """Unweighted and sample-count-weighted column means over model rows."""
    out = []
    for label, weighted in (("Avg/y (unweighted)", False), ("Avg/y (weighted)", True)):
        avg = {"Model": label, "Num": sum(r["Num"] for r in rows)}
        for col in METRIC_COLUMNS:
            if col in ("Model", "Num"):
                continue
            pairs = [(r[col], r["Num"] if weighted else 1) for r in rows if r.get(col) is not None]
            total = sum(w for _, w in pairs)
            avg[col] = sum(v * w for v, w in pairs) / total if total else None
        out.append(avg)
    return out


GROUP_VALUES = {"sex": ("M", "F"), "baseline_myopic": (True, False)}


def bland_altman(records: list[EvalRecord]) -> list[tuple[float, float]]:
    """(mean of prediction and truth, prediction minus truth) for every predicted year."""
    pairs = []
    for r in records:
        for p, t in zip(r.pred_sers, r.true_sers):
            pairs.append(((p + t) / 2.0, p - t))
    return pairs


def subgroup_eval(records: list[EvalRecord], key: str) -> dict:
    """Metrics and Bland-Altman pairs per subgroup, plus warnings for empty groups."""
    if key not in GROUP_VALUES:
        raise ValueError(f"subgroup key must be one of {sorted(GROUP_VALUES)}, got {key!r}")
    groups, warnings = {}, []
    for value in GROUP_VALUES[key]:
        members = [r for r in records if getattr(r, key) == value]
        name = f"{key}={value}"
        if not members:
            warnings.append({"group": name, "warning": "empty group omitted"})
            continue
        groups[name] = {"metrics": compute_metrics(members, name), "bland_altman": bland_altman(members)}
    return {"groups": groups, "warnings": warnings}


# writers -------------------------------------------------------------------------


def _cell(value):
    if value is None:
        return UNDEFINED
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else UNDEFINED
    return value


def write_metrics_csv(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in METRIC_COLUMNS])
    return path


def jsonable(obj):
    """Replace None and non-finite floats with the undefined marker, recursively."""
    if obj is None:
        return UNDEFINED
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return UNDEFINED
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_points_csv(path: str | Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_roc_csv(path, curve) -> Path:
    return write_points_csv(path, ("fpr", "tpr"), zip(curve.fpr, curve.tpr))


def write_sweep_csv(path, sweep: SweepResult) -> Path:
    return write_points_csv(path, ("cutoff", "accuracy"), zip(sweep.cutoffs, sweep.accuracy))
