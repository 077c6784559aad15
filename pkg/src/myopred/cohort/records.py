"""Subject records and the cohort manifest CSV."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..domain import Refraction

MANIFEST_COLUMNS = [
    "subject_id", "sex", "age_days_at_baseline", "visit_year", "image_path",
    "sphere_d", "cylinder_d", "axis_deg", "al_mm", "ct_um",
]
MAX_YEAR = 5


class ManifestError(ValueError):
    """Schema violations, each prefixed with its 1-based data row number."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid manifest:\n" + "\n".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class Visit:
    image_ref: str
    refraction: Refraction
    al_mm: float | None = None
    ct_um: float | None = None

    @property
    def ser(self) -> float:
        return self.refraction.ser


@dataclass
class SubjectRecord:
    subject_id: str
    sex: str
    age_days_at_baseline: int
    visits: dict[int, Visit] = field(default_factory=dict)

    def __post_init__(self):
        if self.sex not in ("M", "F"):
            raise ValueError(f"{self.subject_id}: sex must be M or F, got {self.sex!r}")
        if not self.visits:
            raise ValueError(f"{self.subject_id}: at least one visit required")
        for year in self.visits:
            if not 0 <= year <= MAX_YEAR:
                raise ValueError(f"{self.subject_id}: visit year {year} outside 0..{MAX_YEAR}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_manifest(path: str | Path, records: list[SubjectRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in records:
            for year in sorted(rec.visits):
                v = rec.visits[year]
                writer.writerow([
                    rec.subject_id, rec.sex, rec.age_days_at_baseline, year, v.image_ref,
                    _fmt(v.refraction.sphere), _fmt(v.refraction.cylinder), _fmt(v.refraction.axis),
                    _fmt(v.al_mm), _fmt(v.ct_um),
                ])


def _number(raw: str, name: str, optional: bool, problems: list[str], row: int):
    raw = raw.strip()
    if raw == "":
        if not optional:
            problems.append(f"row {row}: {name} is required")
        return None
    try:
        value = float(raw)
    except ValueError:
        problems.append(f"row {row}: {name}={raw!r} is not a number")
        return None
    if not math.isfinite(value):
        problems.append(f"row {row}: {name}={raw!r} is not finite")
        return None
    return value


def read_manifest(path: str | Path) -> list[SubjectRecord]:
    """Parse and validate a manifest; raises ManifestError listing every bad row."""
    problems: list[str] = []
    subjects: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError([f"header: missing columns {', '.join(missing)}"])
        for row_no, row in enumerate(reader, start=1):
            sid = (row["subject_id"] or "").strip()
            if not sid:
                problems.append(f"row {row_no}: subject_id is empty")
                continue
            sex = (row["sex"] or "").strip()
            if sex not in ("M", "F"):
                problems.append(f"row {row_no}: sex={sex!r} must be M or F")
            try:
                year = int(row["visit_year"])
            except (TypeError, ValueError):
                problems.append(f"row {row_no}: visit_year={row['visit_year']!r} is not an integer")
                continue
            if not 0 <= year <= MAX_YEAR:
                problems.append(f"row {row_no}: visit_year={year} outside 0..{MAX_YEAR}")
                year = None
            age = _number(row["age_days_at_baseline"], "age_days_at_baseline", False, problems, row_no)
            sphere = _number(row["sphere_d"], "sphere_d", False, problems, row_no)
            cyl = _number(row["cylinder_d"], "cylinder_d", False, problems, row_no)
            axis = _number(row["axis_deg"], "axis_deg", False, problems, row_no)
            al = _number(row["al_mm"], "al_mm", True, problems, row_no)
            ct = _number(row["ct_um"], "ct_um", True, problems, row_no)
            image = (row["image_path"] or "").strip()
            if not image:
                problems.append(f"row {row_no}: image_path is empty")
            if axis is not None and not 0.0 <= axis < 180.0:
                problems.append(f"row {row_no}: axis_deg={axis} outside [0, 180)")
                axis = None
            entry = subjects.setdefault(sid, {"sex": sex, "age": age, "visits": {}})
            if entry["sex"] != sex or entry["age"] != age:
                problems.append(f"row {row_no}: subject {sid} has inconsistent sex/age across rows")
            if year is None:
                continue
            if year in entry["visits"]:
                problems.append(f"row {row_no}: subject {sid} repeats visit_year {year}")
                continue
            if None in (sphere, cyl, axis, age) or not image:
                continue
            entry["visits"][year] = Visit(image, Refraction(sphere, cyl, axis), al, ct)
    if problems:
        raise ManifestError(problems)
    return [
        SubjectRecord(sid, e["sex"], int(e["age"]), dict(sorted(e["visits"].items())))
        for sid, e in subjects.items()
    ]
