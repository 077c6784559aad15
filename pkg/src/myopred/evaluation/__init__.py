"""Regression and risk metrics, threshold analysis, subgroups and baselines."""

from .baselines import LinearFit, LogisticFit, linear_baseline, logistic_baseline, logistic_metrics
from .metrics import (
    ConfusionMatrix,
    RocCurve,
    confusion,
    confusion_from_predictions,
    mae,
    r2,
    rank_auc,
    roc_auc,
)
from .report import (
    METRIC_COLUMNS,
    UNDEFINED,
    EvalRecord,
    average_rows,
    bland_altman,
    compute_metrics,
    eval_records,
    jsonable,
    subgroup_eval,
    write_json,
    write_metrics_csv,
    write_points_csv,
    write_roc_csv,
    write_sweep_csv,
)
from .threshold import (
    DEFAULT_GRID,
    SweepResult,
    high_myopia_positive,
    myopia_positive,
    parse_grid,
    threshold_classify,
    threshold_sweep,
)

__all__ = [
    "ConfusionMatrix", "RocCurve", "confusion", "confusion_from_predictions", "mae", "r2",
    "rank_auc", "roc_auc", "LinearFit", "LogisticFit", "linear_baseline", "logistic_baseline",
    "logistic_metrics",
    "METRIC_COLUMNS", "UNDEFINED", "EvalRecord", "average_rows", "bland_altman",
    "compute_metrics", "eval_records", "jsonable", "subgroup_eval", "write_json",
    "write_metrics_csv", "write_points_csv", "write_roc_csv", "write_sweep_csv",
    "DEFAULT_GRID", "SweepResult", "high_myopia_positive", "myopia_positive", "parse_grid",
    "threshold_classify", "threshold_sweep",
]
