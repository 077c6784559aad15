"""Three-phase Adam training, batched prediction and dataset assembly."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .. import nn
from ..cohort.samples import SequenceSample
from ..imaging.enhance import augment_flip
from ..nn import functional as F
from ..nn import Tensor
from .network import MMPN

PIXEL_MEAN = 0.5
PIXEL_SCALE = 0.25


@dataclass(frozen=True)
class Phase:
    lr: float
    epochs: int
    weight_decay: float


@dataclass(frozen=True)
class TrainSchedule:
    phases: tuple = (Phase(1e-3, 40, 0.0), Phase(1e-4, 20, 1e-4), Phase(1e-5, 10, 1e-4))
    batch_train: int = 8
    batch_eval: int = 2
    lambda_cls: float = 0.5
    augment: bool = True
    classifier_mode: str = "joint"  # or "two_stage"

    def __post_init__(self):
        lrs = [p.lr for p in self.phases]
        if any(b >= a for a, b in zip(lrs, lrs[1:])):
            raise ValueError("phases must be ordered by decreasing learning rate")
        if self.classifier_mode not in ("joint", "two_stage"):
            raise ValueError(f"unknown classifier_mode {self.classifier_mode!r}")

    @classmethod
    def full(cls, **kw) -> "TrainSchedule":
        return cls(**kw)

    @classmethod
    def reduced(cls, **kw) -> "TrainSchedule":
        return cls(phases=(Phase(1e-3, 10, 0.0), Phase(1e-4, 5, 1e-4), Phase(1e-5, 3, 1e-4)), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phases"] = [asdict(p) for p in self.phases]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainSchedule":
        d = dict(d)
        d["phases"] = tuple(Phase(**p) for p in d["phases"])
        return cls(**d)


class TrainingDiverged(RuntimeError):
    def __init__(self, batch_index: int, epoch: int, op: str):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch_index} (op '{op}')")
        self.batch_index = batch_index
        self.epoch = epoch
        self.op = op


@dataclass
class SampleArrays:
    """Stacked model inputs for a list of samples."""

    images: np.ndarray  # N x n x 3 x S x S, normalized
    input_sers: np.ndarray  # N x n
    target_sers: np.ndarray  # N x m
    labels: np.ndarray  # N x 2 (myopia, high myopia)
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.input_sers)

    def subset(self, idx) -> "SampleArrays":
        idx = np.asarray(idx, dtype=np.intp)
        return SampleArrays(self.images[idx], self.input_sers[idx], self.target_sers[idx],
                            self.labels[idx], [self.samples[i] for i in idx] if self.samples else [])


def to_model_input(enhanced: np.ndarray) -> np.ndarray:
    """H x W x 3 image in [0, 1] -> normalized 3 x H x W."""
    return (np.asarray(enhanced, dtype=np.float64).transpose(2, 0, 1) - PIXEL_MEAN) / PIXEL_SCALE


def prepare(samples: list[SequenceSample], load_image: Callable[[str], np.ndarray]) -> SampleArrays:
    """Assemble arrays; ``load_image`` maps an image ref to an enhanced H x W x 3 image."""
    if not samples:
        raise ValueError("no samples to prepare")
    images = np.stack([np.stack([to_model_input(load_image(ref)) for ref in s.input_images]) for s in samples])
    return SampleArrays(
        images=images,
        input_sers=np.array([s.input_sers for s in samples], dtype=np.float64),
        target_sers=np.array([s.target_sers for s in samples], dtype=np.float64),
        labels=np.array([[s.label_myopia_at_horizon, s.label_high_myopia_at_horizon] for s in samples], dtype=np.float64),
        samples=list(samples),
    )


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def fit_standardization(model: MMPN, data: SampleArrays):
    values = np.concatenate([data.input_sers.ravel(), data.target_sers.ravel()])
    std = float(values.std())
    model.ser_mean[0] = float(values.mean())
    model.ser_std[0] = std if std > 1e-6 else 1.0


def loss_terms(model: MMPN, out: dict, target_sers: np.ndarray, labels: np.ndarray, lambda_cls: float):
    target_z = Tensor(model.standardize(target_sers))
    reg = F.mse_loss(out["pred_z"], target_z)
    if lambda_cls == 0:
        return reg, reg
    probs = out["probs"]
    cls = F.bce_loss(probs[:, 0], labels[:, 0]) + F.bce_loss(probs[:, 1], labels[:, 1])
    return reg + lambda_cls * cls, reg


def _augment(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = images.copy()
    for i in range(len(out)):
        flags = (bool(rng.random() < 0.5), bool(rng.random() < 0.5))
        out[i] = augment_flip(out[i], flags=flags, channels_last=False)
    return out


def evaluate_loss(model: MMPN, data: SampleArrays, schedule: TrainSchedule) -> dict:
    model.eval()
    total, count = 0.0, 0
    preds, probs = [], []
    with nn.no_grad():
        for start in range(0, len(data), schedule.batch_eval):
            sl = slice(start, start + schedule.batch_eval)
            out = model(Tensor(data.images[sl]), data.input_sers[sl])
            loss, _ = loss_terms(model, out, data.target_sers[sl], data.labels[sl], schedule.lambda_cls)
            k = len(data.input_sers[sl])
            total += loss.item() * k
            count += k
            preds.append(out["pred"])
            probs.append(out["probs"].data)
    preds = np.concatenate(preds)
    probs = np.concatenate(probs)
    return {
        "loss": total / count,
        "mae": float(np.mean(np.abs(preds - data.target_sers))),
        "accuracy": float(np.mean((probs[:, 0] >= 0.5) == (data.labels[:, 0] > 0.5))),
    }


def train(model: MMPN, train_data: SampleArrays, val_data: SampleArrays | None,
          schedule: TrainSchedule = TrainSchedule(), seed: int = 0,
          progress: Callable[[dict], None] | None = None) -> list[dict]:
    """Optimise ``model`` in place and return one log record per epoch."""
    if len(train_data) == 0:
        raise ValueError("empty training set")
    fit_standardization(model, train_data)
    shuffle_rng = substream(seed, "shuffle")
    augment_rng = substream(seed, "augment")
    lambda_cls = 0.0 if schedule.classifier_mode == "two_stage" else schedule.lambda_cls
    params = model.parameters()
    optimizer = nn.Adam(params, lr=schedule.phases[0].lr)
    log: list[dict] = []
    epoch = 0

    stages = [(f"phase{i + 1}", p, params, lambda_cls) for i, p in enumerate(schedule.phases)]
    if schedule.classifier_mode == "two_stage":
        head = model.cls_head.parameters()
        last = schedule.phases[-1]
        stages.append(("classifier", Phase(schedule.phases[0].lr, last.epochs, last.weight_decay), head, None))

    for stage_name, phase, stage_params, stage_lambda in stages:
        if stage_params is not params:
            optimizer = nn.Adam(stage_params, lr=phase.lr)
        optimizer.lr = phase.lr
        optimizer.weight_decay = phase.weight_decay
        for phase_epoch in range(phase.epochs):
            epoch += 1
            # the classifier-only stage keeps the trunk frozen, batch-norm included
            model.train(stage_lambda is not None)
            order = shuffle_rng.permutation(len(train_data))
            total, count = 0.0, 0
            for b, start in enumerate(range(0, len(order), schedule.batch_train)):
                idx = order[start : start + schedule.batch_train]
                images = train_data.images[idx]
                if schedule.augment:
                    images = _augment(images, augment_rng)
                model.zero_grad()
                try:
                    out = model(Tensor(images), train_data.input_sers[idx])
                    if stage_lambda is None:
                        probs = out["probs"]
                        labels = train_data.labels[idx]
                        loss = F.bce_loss(probs[:, 0], labels[:, 0]) + F.bce_loss(probs[:, 1], labels[:, 1])
                    else:
                        loss, _ = loss_terms(model, out, train_data.target_sers[idx], train_data.labels[idx], stage_lambda)
                    loss.backward()
                except nn.NonFiniteError as err:
                    raise TrainingDiverged(b, epoch, err.op) from err
                optimizer.step()
                total += loss.item() * len(idx)
                count += len(idx)
            record = {
                "epoch": epoch,
                "phase": stage_name,
                "phase_epoch": phase_epoch + 1,
                "lr": phase.lr,
                "weight_decay": phase.weight_decay,
                "batch_train": schedule.batch_train,
                "batch_eval": schedule.batch_eval,
                "train_loss": total / count,
            }
            if val_data is not None and len(val_data):
                metrics = evaluate_loss(model, val_data, schedule)
                record.update(val_loss=metrics["loss"], val_mae=metrics["mae"], val_accuracy=metrics["accuracy"])
            log.append(record)
            if progress:
                progress(record)
    model.eval()
    return log


@dataclass(frozen=True)
class PredictionResult:
    predicted_sers: tuple
    p_myopia: float
    p_high_myopia: float


def predict(model: MMPN, data: SampleArrays, batch_size: int = 2) -> list[PredictionResult]:
    if data.images.shape[1] != model.config.n or data.target_sers.shape[1] not in (0, model.config.m):
        raise ValueError(f"samples do not match model (n={model.config.n}, m={model.config.m})")
    model.eval()
    results = []
    with nn.no_grad():
        for start in range(0, len(data), batch_size):
            sl = slice(start, start + batch_size)
            out = model(Tensor(data.images[sl]), data.input_sers[sl])
            for pred, prob in zip(out["pred"], out["probs"].data):
                results.append(PredictionResult(tuple(float(v) for v in pred), float(prob[0]), float(prob[1])))
    return results
