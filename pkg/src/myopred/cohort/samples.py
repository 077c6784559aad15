"""nPm sequence samples, stratified splitting and baseline summary tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import domain
from .records import MAX_YEAR, SubjectRecord, Visit

YEARS = MAX_YEAR + 1


def valid_pairs() -> list[tuple[int, int]]:
    """All (n, m) with n input years and m forecast years inside six visits."""
    return [(n, m) for n in range(1, YEARS) for m in range(1, YEARS - n + 1)]


def check_pair(n: int, m: int):
    if not (1 <= n <= YEARS - 1 and 1 <= m <= YEARS - n):
        raise ValueError(f"invalid (n, m) = ({n}, {m}); need 1 <= n <= 5 and 1 <= m <= 6 - n")


def pair_name(n: int, m: int) -> str:
    return f"{n}p{m}"


@dataclass(frozen=True)
class SequenceSample:
    subject_id: str
    n: int
    m: int
    start_year: int
    input_images: tuple
    input_sers: tuple
    target_sers: tuple
    label_myopia_at_horizon: bool
    label_high_myopia_at_horizon: bool
    sex: str
    baseline_myopic: bool
    origin_visit: Visit
    age_days_at_origin: int

    @property
    def key(self) -> str:
        return f"{self.subject_id}:{self.start_year}"


def build_samples(records: list[SubjectRecord], n: int, m: int, windows: str = "anchored") -> list[SequenceSample]:
    """Cut nPm samples from subject histories.

    ``anchored`` takes one window starting at year 0 per subject;
    ``sliding`` takes every start year that fits.  Windows with any missing
    input or target year are skipped.
    """
    check_pair(n, m)
    if windows == "anchored":
        starts = [0]
    elif windows == "sliding":
        starts = list(range(0, YEARS - n - m + 1))
    else:
        raise ValueError(f"unknown window mode {windows!r}")
    out = []
    for rec in records:
        for s in starts:
            years = range(s, s + n + m)
            if any(y not in rec.visits for y in years):
                continue
            inputs = [rec.visits[y] for y in years[:n]]
            targets = [rec.visits[y].ser for y in years[n:]]
            out.append(SequenceSample(
                subject_id=rec.subject_id,
                n=n,
                m=m,
                start_year=s,
                input_images=tuple(v.image_ref for v in inputs),
                input_sers=tuple(v.ser for v in inputs),
                target_sers=tuple(targets),
                label_myopia_at_horizon=domain.is_myopic(targets[-1]),
                label_high_myopia_at_horizon=domain.is_high_myopic(targets[-1]),
                sex=rec.sex,
                baseline_myopic=domain.is_myopic(inputs[0].ser),
                origin_visit=inputs[-1],
                age_days_at_origin=rec.age_days_at_baseline + 365 * (s + n - 1),
            ))
    return out


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_fraction: float = 5.0 / 6.0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split(samples: list[SequenceSample], spec: SplitSpec = SplitSpec()):
    """Seeded 5:1 split, stratified by baseline myopia, grouped by subject.

    Each stratum contributes round(k * fraction) subjects to training.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to split")
    by_subject: dict[str, list[SequenceSample]] = {}
    for s in samples:
        by_subject.setdefault(s.subject_id, []).append(s)
    strata: dict[bool, list[str]] = {False: [], True: []}
    for sid, group in by_subject.items():
        first = min(group, key=lambda s: s.start_year)
        strata[first.baseline_myopic].append(sid)
    rng = np.random.default_rng(spec.seed)
    train_ids: set[str] = set()
    for stratum in (False, True):
        ids = sorted(strata[stratum])
        if not ids:
            continue
        order = rng.permutation(len(ids))
        k = int(math.floor(len(ids) * spec.train_fraction + 0.5))
        train_ids.update(ids[i] for i in order[:k])
    train = [s for s in samples if s.subject_id in train_ids]
    validation = [s for s in samples if s.subject_id not in train_ids]
    return train, validation


STATS_COLUMNS = [
    "Model", "Set", "Num", "Age (d)", "Sex (M%)", "DS (D)", "DC (D)", "Axis (°)",
    "CT (μm)", "AL (mm)", "SER(D)", "Mild Myopia", "Moderate and High Myopia",
]


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def cohort_stats(samples: list[SequenceSample], model: str = "", set_name: str = "") -> dict:
    """Arithmetic means of each sample's state at its last observed year."""
    if not samples:
        raise ValueError("cohort_stats needs at least one sample")
    visits = [s.origin_visit for s in samples]
    sers = [v.ser for v in visits]
    n = len(samples)
    return {
        "Model": model,
        "Set": set_name,
        "Num": n,
        "Age (d)": _mean([s.age_days_at_origin for s in samples]),
        "Sex (M%)": sum(s.sex == "M" for s in samples) / n,
        "DS (D)": _mean([v.refraction.sphere for v in visits]),
        "DC (D)": _mean([v.refraction.cylinder for v in visits]),
        "Axis (°)": _mean([v.refraction.axis for v in visits]),
        "CT (μm)": _mean([v.ct_um for v in visits]),
        "AL (mm)": _mean([v.al_mm for v in visits]),
        "SER(D)": _mean(sers),
        "Mild Myopia": sum(domain.classify_ser(x) is domain.MyopiaCategory.LOW_MYOPIA for x in sers) / n,
        "Moderate and High Myopia": sum(x <= domain.MODERATE_CUTOFF for x in sers) / n,
    }


def stats_table(records: list[SubjectRecord], spec: SplitSpec = SplitSpec(), windows: str = "anchored") -> list[dict]:
    rows = []
    for n, m in valid_pairs():
        samples = build_samples(records, n, m, windows)
        if len(samples) < 2:
            continue
        train, val = split(samples, spec)
        for name, part in (("Training", train), ("Validation", val)):
            if part:
                rows.append(cohort_stats(part, pair_name(n, m), name))
    return rows


def write_stats(path: str | Path, rows: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=STATS_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in STATS_COLUMNS})


SPLIT_COLUMNS = ["subject_id", "start_year", "n", "m", "set"]


def write_split(path: str | Path, train: list[SequenceSample], validation: list[SequenceSample]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SPLIT_COLUMNS)
        for name, part in (("train", train), ("validation", validation)):
            for s in part:
                writer.writerow([s.subject_id, s.start_year, s.n, s.m, name])


def read_split(path: str | Path, samples: list[SequenceSample]):
    """Re-partition ``samples`` according to a split file."""
    assignment = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            assignment[(row["subject_id"], int(row["start_year"]), int(row["n"]), int(row["m"]))] = row["set"]
    train, val = [], []
    for s in samples:
        where = assignment.get((s.subject_id, s.start_year, s.n, s.m))
        if where == "train":
            train.append(s)
        elif where == "validation":
            val.append(s)
    return train, val
