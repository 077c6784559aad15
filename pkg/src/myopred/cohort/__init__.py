"""Longitudinal records, nPm samples, splits and synthetic cohorts."""

from .records import MANIFEST_COLUMNS, ManifestError, SubjectRecord, Visit, read_manifest, write_manifest
from .samples import (
    STATS_COLUMNS,
    SequenceSample,
    SplitSpec,
    build_samples,
    check_pair,
    cohort_stats,
    pair_name,
    read_split,
    split,
    stats_table,
    valid_pairs,
    write_split,
    write_stats,
)
from .synth import Cohort, SynthParams, synth_cohort
