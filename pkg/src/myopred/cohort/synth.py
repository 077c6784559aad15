"""Synthetic longitudinal cohorts with rendered fundus photographs."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..domain import Refraction
from ..imaging.io import write_png
from .records import MAX_YEAR, SubjectRecord, Visit, write_manifest
from .render import FundusStyle, render_fundus


@dataclass(frozen=True)
class SynthParams:
    subjects: int = 600
    slow_rate: tuple = (0.2, 0.1)  # mean, sd in D/year
    fast_rate: tuple = (1.0, 0.2)
    fast_weight: float = 0.3
    noise_sd: float = 0.1
    baseline_ser: tuple = (1.0, 1.0)
    image_side: int = 64
    missing_visit_prob: float = 0.0

    def validate(self):
        if self.subjects < 1:
            raise ValueError("subjects must be >= 1")
        if not 0.0 <= self.fast_weight <= 1.0:
            raise ValueError("fast_weight must lie in [0, 1]")
        if min(self.slow_rate[1], self.fast_rate[1], self.noise_sd, self.baseline_ser[1]) < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.image_side < 16:
            raise ValueError("image_side must be >= 16")
        if not 0.0 <= self.missing_visit_prob < 1.0:
            raise ValueError("missing_visit_prob must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Cohort:
    records: list[SubjectRecord]
    images: dict = field(default_factory=dict)  # image_ref -> uint8 array
    rates: dict = field(default_factory=dict)  # subject_id -> D/year

    def save(self, out_dir: str | Path, manifest_name: str = "manifest.csv") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for ref, img in self.images.items():
            write_png(out_dir / ref, img)
        path = out_dir / manifest_name
        write_manifest(path, self.records)
        return path


def subject_rng(seed: int, subject_id: str, stream: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(subject_id.encode()), zlib.crc32(stream.encode())])


def synth_cohort(params: SynthParams = SynthParams(), seed: int = 0, render: bool = True) -> Cohort:
    """Generate subjects with SER(t+1) = SER(t) - rate + noise and matching images."""
    params.validate()
    rng = np.random.default_rng([seed, 0])
    records, images, rates = [], {}, {}
    for i in range(params.subjects):
        sid = f"S{i:05d}"
        fast = rng.random() < params.fast_weight
        mean, sd = params.fast_rate if fast else params.slow_rate
        rate = float(rng.normal(mean, sd)) if sd > 0 else float(mean)
        sex = "M" if rng.random() < 0.5 else "F"
        age = int(round(rng.normal(2600, 120)))
        ser = float(rng.normal(*params.baseline_ser)) if params.baseline_ser[1] > 0 else float(params.baseline_ser[0])
        cyl = -float(np.round(abs(rng.normal(0.5, 0.3)) * 4) / 4)
        axis = float(rng.integers(0, 180))
        ct = round(float(rng.normal(542.0, 30.0)), 1)
        style_rng = subject_rng(seed, sid, "style")
        style = FundusStyle.draw(style_rng)
        visits = {}
        for year in range(MAX_YEAR + 1):
            if year > 0:
                noise = float(rng.normal(0.0, params.noise_sd)) if params.noise_sd > 0 else 0.0
                ser = ser - rate + noise
            missing = params.missing_visit_prob > 0 and rng.random() < params.missing_visit_prob
            al = round(23.0 - 0.35 * ser + float(rng.normal(0.0, 0.3)), 3)
            if missing:
                continue
            ref = f"images/{sid}_y{year}.png"
            sphere = round(ser - cyl / 2.0, 4)
            visits[year] = Visit(ref, Refraction(sphere, cyl, axis), al, ct)
            if render:
                img_rng = subject_rng(seed, sid, f"image{year}")
                images[ref] = render_fundus(params.image_side, style, ser, rate, img_rng)
        if not visits:
            continue
        records.append(SubjectRecord(sid, sex, age, visits))
        rates[sid] = rate
    return Cohort(records, images, rates)
