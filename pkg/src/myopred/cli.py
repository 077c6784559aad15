"""Command-line pipeline: synth, preprocess, split, stats, train, eval, predict, sweep, explain.

Every command reads its settings from defaults, then an optional JSON config
file (``--config``), then command-line flags, and writes the resolved settings
to ``config.json`` in its output directory.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 numerical failure.
Failures print one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, nn
from .cohort import (
    ManifestError,
    SplitSpec,
    SynthParams,
    build_samples,
    pair_name,
    read_manifest,
    read_split,
    split,
    stats_table,
    synth_cohort,
    write_split,
    write_stats,
)
from .evaluation import (
    DEFAULT_GRID,
    average_rows,
    compute_metrics,
    eval_records,
    linear_baseline,
    logistic_baseline,
    logistic_metrics,
    mae,
    parse_grid,
    roc_auc,
    subgroup_eval,
    threshold_sweep,
    write_json,
    write_metrics_csv,
    write_points_csv,
    write_roc_csv,
    write_sweep_csv,
)
from .explain import DEFAULT_TARGET, explain_sample, heatmap_filename, parse_target
from .imaging import ImageRejected, PreprocessConfig, QualityThresholds, preprocess, read_png, write_png
from .imaging.pipeline import write_rejections
from .imaging.quality import QualityMetrics, QualityVerdict
from .model import (
    MMPN,
    CheckpointError,
    MMPNConfig,
    TrainingDiverged,
    TrainSchedule,
    load_checkpoint,
    predict,
    prepare,
    save_checkpoint,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    def __init__(self, message: str, details: list | None = None):
        super().__init__(message)
        self.details = details or []


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# configuration -------------------------------------------------------------------

_COMMON = {"seed": 0}
_DATA = {"manifest": None, "enhanced": None, "split": None, "windows": "anchored"}

DEFAULTS = {
    "synth": {"out": None, "subjects": 600, "image_side": 64, "fast_weight": 0.3,
              "noise_sd": 0.1, "missing_visit_prob": 0.0},
    "preprocess": {"manifest": None, "out": None, "side": 64, "hp_max": 0.02, "lp_max": 0.30,
                   "ys_min": 0.0, "clahe_clip": 2.0, "boost_gain": 4.0, "boost_sigma": None,
                   "boost_mode": "normalize", "jobs": 1},
    "split": {"manifest": None, "out": None, "n": 1, "m": 1, "windows": "anchored"},
    "stats": {"manifest": None, "out": None, "windows": "anchored"},
    "train": {**_DATA, "out": None, "n": 1, "m": 1, "schedule": "reduced", "preset": "desk",
              "lambda_cls": 0.5, "classifier_mode": "joint", "augment": True, "lstm_hidden": None},
    "eval": {**_DATA, "checkpoint": None, "out": None, "set": "validation", "grid": DEFAULT_GRID},
    "predict": {**_DATA, "checkpoint": None, "out": None, "set": "all"},
    "sweep": {"predictions": None, "out": None, "grid": DEFAULT_GRID},
    "explain": {**_DATA, "checkpoint": None, "out": None, "set": "validation", "sample": None,
                "limit": 1, "target": DEFAULT_TARGET},
}
REQUIRED = {
    "synth": ("out",),
    "preprocess": ("manifest", "out"),
    "split": ("manifest", "out"),
    "stats": ("manifest", "out"),
    "train": ("manifest", "enhanced", "out"),
    "eval": ("manifest", "enhanced", "checkpoint", "out"),
    "predict": ("manifest", "enhanced", "checkpoint", "out"),
    "sweep": ("predictions", "out"),
    "explain": ("manifest", "enhanced", "checkpoint", "out"),
}


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """flags > config file > defaults."""
    cfg = {**_COMMON, **DEFAULTS[command]}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config file {args.config}: {err}") from err
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        section = doc.get(command, {})
        flat = {k: v for k, v in doc.items() if k in cfg}
        unknown = sorted(set(section) - set(cfg))
        if unknown:
            raise UsageError(f"unknown {command} settings in config file: {', '.join(unknown)}")
        cfg.update(flat)
        cfg.update(section)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    missing = [k for k in REQUIRED[command] if cfg.get(k) in (None, [], "")]
    if missing:
        raise UsageError(f"{command}: missing required setting(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")
    return cfg


def derive_seed(root: int, name: str) -> int:
    """Independent integer seed for a named component."""
    return int(np.random.default_rng([int(root), zlib.crc32(name.encode())]).integers(2**31 - 1))


def _prepare_out(cfg: dict, command: str) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    doc = {"tool": "myopred", "version": __version__, "command": command, "config": cfg}
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} not found: {p}")
    return p


# shared loading --------------------------------------------------------------------


def _load_records(cfg):
    return read_manifest(_existing(cfg["manifest"], "manifest"))


def _image_loader(enhanced_dir: Path):
    cache = {}

    def load(ref: str) -> np.ndarray:
        if ref not in cache:
            cache[ref] = read_png(enhanced_dir / ref).astype(np.float64) / 255.0
        return cache[ref]

    return load


def _usable(samples, enhanced_dir: Path):
    """Drop samples whose input images were rejected during preprocessing."""
    kept = [s for s in samples if all((enhanced_dir / ref).exists() for ref in s.input_images)]
    return kept, len(samples) - len(kept)


def _partition(cfg, samples, n, m):
    if cfg.get("split"):
        train_s, val_s = read_split(_existing(cfg["split"], "split file"), samples)
        if not train_s and not val_s:
            raise DataError(f"split file has no rows for {pair_name(n, m)}")
        return train_s, val_s
    return split(samples, SplitSpec(seed=derive_seed(cfg["seed"], "split")))


def _select_set(cfg, samples, n, m):
    which = cfg.get("set", "all")
    if which == "all":
        return samples
    train_s, val_s = _partition(cfg, samples, n, m)
    return train_s if which == "train" else val_s


def _samples_for(cfg, n, m):
    records = _load_records(cfg)
    enhanced = _existing(cfg["enhanced"], "enhanced image directory")
    samples = build_samples(records, n, m, cfg["windows"])
    samples, dropped = _usable(samples, enhanced)
    if not samples:
        raise DataError(f"no usable {pair_name(n, m)} samples (dropped {dropped} with rejected images)")
    return samples, dropped, enhanced


def _info(msg: str):
    print(msg, flush=True)


# commands --------------------------------------------------------------------------


def cmd_synth(cfg):
    out = _prepare_out(cfg, "synth")
    params = SynthParams(subjects=cfg["subjects"], image_side=cfg["image_side"],
                         fast_weight=cfg["fast_weight"], noise_sd=cfg["noise_sd"],
                         missing_visit_prob=cfg["missing_visit_prob"])
    try:
        params.validate()
    except ValueError as err:
        raise UsageError(str(err)) from err
    cohort = synth_cohort(params, seed=derive_seed(cfg["seed"], "synth"))
    path = cohort.save(out)
    rates = [[sid, repr(rate)] for sid, rate in cohort.rates.items()]
    write_points_csv(out / "rates.csv", ("subject_id", "rate_d_per_year"), rates)
    _info(f"wrote {len(cohort.records)} subjects, {len(cohort.images)} images -> {path}")


def _preprocess_one(job):
    src, config = job
    try:
        img = preprocess(read_png(src), config)
    except ImageRejected as err:
        m = err.metrics
        return None, (m.hp_fraction, m.lp_fraction, m.rb_difference, sorted(err.verdict.failures))
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8), None


def cmd_preprocess(cfg):
    records = _load_records(cfg)
    out = _prepare_out(cfg, "preprocess")
    root = Path(cfg["manifest"]).parent
    config = PreprocessConfig(
        side=cfg["side"], thresholds=QualityThresholds(cfg["hp_max"], cfg["lp_max"], cfg["ys_min"]),
        clahe_clip=cfg["clahe_clip"], boost_sigma=cfg["boost_sigma"], boost_gain=cfg["boost_gain"],
        boost_mode=cfg["boost_mode"])
    refs = sorted({v.image_ref for r in records for v in r.visits.values()})
    missing = [ref for ref in refs if not (root / ref).exists()]
    if missing:
        raise DataError(f"{len(missing)} image(s) referenced by the manifest are missing", missing[:20])
    jobs = [(root / ref, config) for ref in refs]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_preprocess_one, jobs, chunksize=16))
    else:
        results = [_preprocess_one(j) for j in jobs]
    rejected = []
    for ref, (img, rejection) in zip(refs, results):
        if rejection is None:
            write_png(out / ref, img)
        else:
            hp, lp, rb, failures = rejection
            err = ImageRejected(QualityVerdict(frozenset(failures)), QualityMetrics(hp, lp, rb))
            rejected.append((ref, err))
    write_rejections(out / "rejections.csv", rejected)
    _info(f"enhanced {len(refs) - len(rejected)} images, rejected {len(rejected)} -> {out}")


def cmd_split(cfg):
    records = _load_records(cfg)
    out = _prepare_out(cfg, "split")
    samples = build_samples(records, cfg["n"], cfg["m"], cfg["windows"])
    if len(samples) < 2:
        raise DataError(f"only {len(samples)} {pair_name(cfg['n'], cfg['m'])} samples; need at least 2")
    train_s, val_s = split(samples, SplitSpec(seed=derive_seed(cfg["seed"], "split")))
    write_split(out / "split.csv", train_s, val_s)
    _info(f"{pair_name(cfg['n'], cfg['m'])}: {len(train_s)} train / {len(val_s)} validation -> {out / 'split.csv'}")


def cmd_stats(cfg):
    records = _load_records(cfg)
    out = _prepare_out(cfg, "stats")
    rows = stats_table(records, SplitSpec(seed=derive_seed(cfg["seed"], "split")), cfg["windows"])
    write_stats(out / "stats.csv", rows)
    _info(f"wrote {len(rows)} rows -> {out / 'stats.csv'}")


def _model_config(cfg, image_side: int) -> MMPNConfig:
    n, m = cfg["n"], cfg["m"]
    if cfg["preset"] == "desk":
        base = MMPNConfig(image_side=image_side, n=n, m=m)
    elif cfg["preset"] == "tiny":
        base = MMPNConfig.tiny(n, m)
        base = MMPNConfig.from_dict({**base.to_dict(), "image_side": image_side})
    elif cfg["preset"] == "resnet34":
        base = MMPNConfig.resnet34(image_side, n, m)
    else:
        raise UsageError(f"unknown preset {cfg['preset']!r}")
    if cfg.get("lstm_hidden"):
        base = MMPNConfig.from_dict({**base.to_dict(), "lstm_hidden": cfg["lstm_hidden"]})
    return base


def _schedule(cfg) -> TrainSchedule:
    kw = dict(lambda_cls=cfg["lambda_cls"], classifier_mode=cfg["classifier_mode"], augment=cfg["augment"])
    if cfg["schedule"] == "full":
        return TrainSchedule.full(**kw)
    if cfg["schedule"] == "reduced":
        return TrainSchedule.reduced(**kw)
    raise UsageError(f"unknown schedule {cfg['schedule']!r}")


LOG_COLUMNS = ("epoch", "phase", "phase_epoch", "lr", "weight_decay", "batch_train", "batch_eval",
               "train_loss", "val_loss", "val_mae", "val_accuracy")


def cmd_train(cfg):
    from .plotting import plot_training

    n, m = cfg["n"], cfg["m"]
    schedule = _schedule(cfg)
    samples, dropped, enhanced = _samples_for(cfg, n, m)
    train_s, val_s = _partition(cfg, samples, n, m)
    if not train_s:
        raise DataError("training partition is empty")
    out = _prepare_out(cfg, "train")
    load = _image_loader(enhanced)
    train_data = prepare(train_s, load)
    val_data = prepare(val_s, load) if val_s else None
    side = train_data.images.shape[-1]
    model = MMPN(_model_config(cfg, side), seed=derive_seed(cfg["seed"], "init"))
    _info(f"{pair_name(n, m)}: {len(train_s)} train / {len(val_s)} validation samples"
          f" ({dropped} dropped for rejected images)")

    def progress(rec):
        _info(f"epoch {rec['epoch']:3d} {rec['phase']} lr={rec['lr']:g} loss={rec['train_loss']:.4f}"
              + (f" val_mae={rec['val_mae']:.4f}" if "val_mae" in rec else ""))

    log = train(model, train_data, val_data, schedule, seed=derive_seed(cfg["seed"], "train"), progress=progress)
    save_checkpoint(out / "model.mmpn", model, {"schedule": schedule.to_dict(), "pair": pair_name(n, m)})
    write_points_csv(out / "training_log.csv", LOG_COLUMNS, [[r.get(c, "") for c in LOG_COLUMNS] for r in log])
    plot_training(log, out / "training.png")
    _info(f"checkpoint -> {out / 'model.mmpn'}")


def _checkpoint_samples(cfg, path):
    model, _doc = load_checkpoint(_existing(path, "checkpoint"))
    n, m = model.config.n, model.config.m
    samples, _, enhanced = _samples_for(cfg, n, m)
    return model, n, m, samples, enhanced


def _baselines(train_s, val_s) -> dict:
    x_tr = np.array([s.input_sers[-1] for s in train_s])
    x_va = np.array([s.input_sers[-1] for s in val_s])
    out = {}
    pred_va, true_va = [], []
    linear = []
    m = len(train_s[0].target_sers)
    for j in range(m):
        fit = linear_baseline(x_tr, [s.target_sers[j] for s in train_s])
        linear.append({"year": j + 1, "slope": fit.slope, "intercept": fit.intercept, "train_mae": fit.mae})
        pred_va.extend(fit.predict(x_va))
        true_va.extend(s.target_sers[j] for s in val_s)
    out["linear"] = {"fits": linear, "mae": mae(pred_va, true_va)}
    for name, attr in (("logistic_myopia", "label_myopia_at_horizon"),
                       ("logistic_high_myopia", "label_high_myopia_at_horizon")):
        fit = logistic_baseline(x_tr, [getattr(s, attr) for s in train_s])
        out[name] = {"weight": fit.weight, "bias": fit.bias, "steps": fit.steps,
                     "metrics": logistic_metrics(fit, x_va, [getattr(s, attr) for s in val_s])}
    return out


def cmd_eval(cfg):
    from .plotting import plot_bland_altman, plot_roc, plot_sweep

    checkpoints = cfg["checkpoint"] if isinstance(cfg["checkpoint"], list) else [cfg["checkpoint"]]
    grid = parse_grid(cfg["grid"])
    out = _prepare_out(cfg, "eval")
    rows, report = [], {"models": {}}
    for path in checkpoints:
        model, n, m, samples, enhanced = _checkpoint_samples(cfg, path)
        name = pair_name(n, m)
        train_s, val_s = _partition(cfg, samples, n, m)
        chosen = {"validation": val_s, "train": train_s, "all": samples}[cfg["set"]]
        if not chosen:
            raise DataError(f"{name}: the {cfg['set']} set is empty")
        data = prepare(chosen, _image_loader(enhanced))
        records = eval_records(chosen, predict(model, data))
        row = compute_metrics(records, name)
        rows.append(row)
        pred_h = np.array([r.pred_sers[-1] for r in records])
        true_h = np.array([r.true_sers[-1] for r in records])
        sweep = threshold_sweep(pred_h, true_h, grid)
        write_sweep_csv(out / f"sweep_{name}.csv", sweep)
        plot_sweep(sweep, out / f"sweep_{name}.png")
        curves = {}
        for label, scores, truth in (
            ("myopia", [r.p_myopia for r in records], [r.label_myopia for r in records]),
            ("high_myopia", [r.p_high_myopia for r in records], [r.label_high_myopia for r in records]),
            ("myopia_threshold", -pred_h, [r.label_myopia for r in records]),
            ("high_myopia_threshold", -pred_h, [r.label_high_myopia for r in records]),
        ):
            try:
                curve = roc_auc(scores, truth)
            except ValueError:
                continue
            write_roc_csv(out / f"roc_{label}_{name}.csv", curve)
            curves[label] = curve
        plot_roc(curves, out / f"roc_{name}.png")
        subgroups = {key: subgroup_eval(records, key) for key in ("sex", "baseline_myopic")}
        for key, res in subgroups.items():
            plot_bland_altman({g: v["bland_altman"] for g, v in res["groups"].items()},
                              out / f"bland_altman_{key}_{name}.png")
        report["models"][name] = {
            "metrics": row,
            "sweep": {"lowest_cutoff": sweep.lowest_cutoff,
                      "accuracy_at": {repr(x): sweep.at(x) for x in (-6.0, -0.5) if np.any(np.isclose(grid, x))}},
            "subgroups": subgroups,
            "baselines": _baselines(train_s, val_s) if train_s and val_s else None,
        }
        _info(f"{name}: MAE {row['MAE /D']:.4f} D on {len(records)} samples")
    if len(rows) > 1:
        rows.extend(average_rows(rows))
    write_metrics_csv(out / "metrics.csv", rows)
    report["rows"] = rows
    write_json(out / "metrics.json", report)
    _info(f"metrics -> {out / 'metrics.csv'}")


PRED_FIXED = ("sample_id", "subject_id", "start_year", "n", "m")


def cmd_predict(cfg):
    model, n, m, samples, enhanced = _checkpoint_samples(cfg, cfg["checkpoint"])
    chosen = _select_set(cfg, samples, n, m)
    if not chosen:
        raise DataError(f"the {cfg['set']} set is empty")
    out = _prepare_out(cfg, "predict")
    preds = predict(model, prepare(chosen, _image_loader(enhanced)))
    header = (list(PRED_FIXED) + [f"pred_y{j + 1}" for j in range(m)] + [f"true_y{j + 1}" for j in range(m)]
              + ["p_myopia", "p_high_myopia", "label_myopia", "label_high_myopia"])
    rows = []
    for s, p in zip(chosen, preds):
        rows.append([s.key, s.subject_id, s.start_year, n, m, *p.predicted_sers, *s.target_sers,
                     p.p_myopia, p.p_high_myopia, int(s.label_myopia_at_horizon), int(s.label_high_myopia_at_horizon)])
    write_points_csv(out / "predictions.csv", header, rows)
    _info(f"{len(rows)} predictions -> {out / 'predictions.csv'}")


def _read_predictions(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: no prediction rows")
    m = int(rows[0]["m"])
    try:
        pred = np.array([float(r[f"pred_y{m}"]) for r in rows])
        true = np.array([float(r[f"true_y{m}"]) for r in rows])
    except (KeyError, ValueError) as err:
        raise DataError(f"{path}: malformed predictions file ({err})") from err
    return pred, true


def cmd_sweep(cfg):
    from .plotting import plot_sweep

    try:
        grid = parse_grid(cfg["grid"])
    except ValueError as err:
        raise UsageError(str(err)) from err
    pred, true = _read_predictions(_existing(cfg["predictions"], "predictions file"))
    out = _prepare_out(cfg, "sweep")
    sweep = threshold_sweep(pred, true, grid)
    write_sweep_csv(out / "sweep.csv", sweep)
    plot_sweep(sweep, out / "sweep.png")
    write_json(out / "sweep.json", {"lowest_cutoff": sweep.lowest_cutoff, "points": len(grid)})
    _info(f"lowest agreement at X={sweep.lowest_cutoff:g} D -> {out / 'sweep.csv'}")


def cmd_explain(cfg):
    try:
        target = parse_target(cfg["target"])
    except ValueError as err:
        raise UsageError(str(err)) from err
    model, n, m, samples, enhanced = _checkpoint_samples(cfg, cfg["checkpoint"])
    if cfg.get("sample"):
        wanted = set(cfg["sample"]) if isinstance(cfg["sample"], list) else {cfg["sample"]}
        chosen = [s for s in samples if s.key in wanted or s.subject_id in wanted]
        if not chosen:
            raise DataError(f"no usable samples match {sorted(wanted)}")
    else:
        chosen = _select_set(cfg, samples, n, m)[: cfg["limit"]]
    out = _prepare_out(cfg, "explain")
    load = _image_loader(enhanced)
    data = prepare(chosen, load)
    index = []
    for i, s in enumerate(chosen):
        display = [load(ref) for ref in s.input_images]
        sample_id = s.key.replace(":", "-")
        for t, method, rgb, zero in explain_sample(model, data.images[i], data.input_sers[i], display, target):
            fname = heatmap_filename(sample_id, s.start_year + t, target, method)
            write_png(out / fname, rgb)
            index.append({"sample": s.key, "year": s.start_year + t, "method": method,
                          "file": fname, "zero_gradient": zero})
    write_json(out / "heatmaps.json", index)
    _info(f"{len(index)} heatmaps -> {out}")


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "split": cmd_split, "stats": cmd_stats,
    "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "sweep": cmd_sweep,
    "explain": cmd_explain,
}


# argument parsing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="myopred", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"myopred {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON settings file (flags take precedence)")
        p.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
        p.add_argument("--out", default=None, help="output directory")
        return p

    def data_args(p):
        p.add_argument("--manifest", default=None, help="cohort manifest CSV")
        p.add_argument("--enhanced", default=None, help="preprocess output directory")
        p.add_argument("--split", default=None, help="split CSV from the split command")
        p.add_argument("--windows", choices=("anchored", "sliding"), default=None)

    p = command("synth", "generate a synthetic cohort")
    p.add_argument("--subjects", type=int, default=None)
    p.add_argument("--image-side", type=int, default=None)
    p.add_argument("--fast-weight", type=float, default=None)
    p.add_argument("--noise-sd", type=float, default=None)
    p.add_argument("--missing-visit-prob", type=float, default=None)

    p = command("preprocess", "screen and enhance every manifest image")
    p.add_argument("--manifest", default=None)
    p.add_argument("--side", type=int, default=None)
    p.add_argument("--hp-max", type=float, default=None)
    p.add_argument("--lp-max", type=float, default=None)
    p.add_argument("--ys-min", type=float, default=None)
    p.add_argument("--clahe-clip", type=float, default=None)
    p.add_argument("--boost-gain", type=float, default=None)
    p.add_argument("--boost-sigma", type=float, default=None)
    p.add_argument("--boost-mode", choices=("normalize", "subtract"), default=None)
    p.add_argument("--jobs", type=int, default=None, help="worker processes")

    for name, text in (("split", "write a stratified train/validation split"),
                       ("stats", "write the per-model cohort summary table")):
        p = command(name, text)
        p.add_argument("--manifest", default=None)
        p.add_argument("--windows", choices=("anchored", "sliding"), default=None)
        if name == "split":
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--m", type=int, default=None)

    p = command("train", "train an nPm model")
    data_args(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--schedule", choices=("reduced", "full"), default=None)
    p.add_argument("--preset", choices=("desk", "tiny", "resnet34"), default=None)
    p.add_argument("--lambda-cls", type=float, default=None)
    p.add_argument("--classifier-mode", choices=("joint", "two_stage"), default=None)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--lstm-hidden", type=int, default=None)

    p = command("eval", "metrics, ROC, sweep, subgroups and baselines")
    data_args(p)
    p.add_argument("--checkpoint", action="append", default=None, help="repeatable")
    p.add_argument("--set", choices=("validation", "train", "all"), default=None)
    p.add_argument("--grid", default=None, help="cutoff grid start:stop:step")

    p = command("predict", "write per-sample predictions")
    data_args(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--set", choices=("validation", "train", "all"), default=None)

    p = command("sweep", "threshold-sweep accuracy curve from a predictions file")
    p.add_argument("--predictions", default=None)
    p.add_argument("--grid", default=None, help="cutoff grid start:stop:step")

    p = command("explain", "Grad-CAM and guided-backprop overlays")
    data_args(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--set", choices=("validation", "train", "all"), default=None)
    p.add_argument("--sample", action="append", default=None, help="sample key or subject id; repeatable")
    p.add_argument("--limit", type=int, default=None, help="samples to explain when --sample is absent")
    p.add_argument("--target", default=None, help="p_myopia, p_high_myopia or serJ")
    return parser


def _fail(code: int, err: Exception, details=None) -> int:
    doc = {"error": type(err).__name__, "exit_code": code, "message": str(err)}
    if details:
        doc["details"] = list(details)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args.command, args)
        COMMANDS[args.command](cfg)
    except UsageError as err:
        return _fail(EXIT_USAGE, err)
    except ManifestError as err:
        return _fail(EXIT_DATA, err, err.problems)
    except DataError as err:
        return _fail(EXIT_DATA, err, err.details)
    except (TrainingDiverged, nn.NonFiniteError) as err:
        return _fail(EXIT_NUMERIC, err)
    except (CheckpointError, FileNotFoundError, ValueError) as err:
        return _fail(EXIT_DATA, err)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
