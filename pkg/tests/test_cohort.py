import csv

import numpy as np
import pytest

from myopred import domain
from myopred.cohort import (
    MANIFEST_COLUMNS,
    STATS_COLUMNS,
    ManifestError,
    SplitSpec,
    SubjectRecord,
    SynthParams,
    Visit,
    build_samples,
    check_pair,
    cohort_stats,
    pair_name,
    read_manifest,
    read_split,
    split,
    stats_table,
    synth_cohort,
    valid_pairs,
    write_manifest,
    write_split,
    write_stats,
)
from myopred.cohort.render import texture_amplitude
from myopred.domain import Refraction


def make_record(sid, sers, sex="M", missing=()):
    visits = {y: Visit(f"img/{sid}_{y}.png", Refraction(s, 0.0), 23.0, 540.0)
              for y, s in enumerate(sers) if y not in missing}
    return SubjectRecord(sid, sex, 2500, visits)


@pytest.fixture(scope="module")
def small_cohort():
    return synth_cohort(SynthParams(subjects=30, image_side=32), seed=11)


class TestPairs:
    def test_fifteen(self):
        pairs = valid_pairs()
        assert len(pairs) == 15
        assert set(pairs) == {(n, m) for n in range(1, 6) for m in range(1, 7 - n)}

    @pytest.mark.parametrize("n,m", [(0, 1), (1, 0), (3, 4), (6, 1)])
    def test_invalid(self, n, m):
        with pytest.raises(ValueError):
            check_pair(n, m)

    def test_name(self):
        assert pair_name(2, 3) == "2p3"


class TestBuildSamples:
    def test_full_history(self):
        rec = make_record("A", [1.0, 0.5, 0.0, -0.5, -1.0, -6.5])
        (s,) = build_samples([rec], 2, 4)
        assert s.input_sers == (1.0, 0.5)
        assert s.target_sers == (0.0, -0.5, -1.0, -6.5)
        assert s.label_myopia_at_horizon and s.label_high_myopia_at_horizon
        assert not s.baseline_myopic

    def test_gap_excluded(self):
        rec = make_record("A", [1.0] * 6, missing=(3,))
        assert build_samples([rec], 1, 3) == []
        assert len(build_samples([rec], 1, 2)) == 1

    def test_count_per_pair(self):
        recs = [make_record(f"S{i}", [1.0 - 0.3 * y for y in range(6)]) for i in range(7)]
        for n, m in valid_pairs():
            assert len(build_samples(recs, n, m)) == 7

    def test_sliding_windows(self):
        rec = make_record("A", [0.0] * 6)
        starts = [s.start_year for s in build_samples([rec], 2, 1, windows="sliding")]
        assert starts == [0, 1, 2, 3]

    def test_labels_follow_domain(self, small_cohort):
        for n, m in valid_pairs():
            for s in build_samples(small_cohort.records, n, m):
                assert s.label_myopia_at_horizon == domain.is_myopic(s.target_sers[-1])
                assert s.label_high_myopia_at_horizon == domain.is_high_myopic(s.target_sers[-1])
                assert len(s.input_images) == n and len(s.target_sers) == m

    def test_bad_window_mode(self):
        with pytest.raises(ValueError):
            build_samples([], 1, 1, windows="random")


def mixed_samples(count, myopic_fraction, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    n_myopic = int(round(count * myopic_fraction))
    for i in range(count):
        base = -1.0 if i < n_myopic else 1.0
        recs.append(make_record(f"S{i:04d}", [base - 0.1 * y for y in range(6)], sex=rng.choice(["M", "F"])))
    return build_samples(recs, 1, 1)


class TestSplit:
    def test_six_samples(self):
        train, val = split(mixed_samples(6, 0.0), SplitSpec(seed=1))
        assert (len(train), len(val)) == (5, 1)

    def test_stratified_counts(self):
        samples = mixed_samples(600, 0.2)
        train, val = split(samples, SplitSpec(seed=4))
        assert (len(train), len(val)) == (500, 100)
        assert abs(sum(s.baseline_myopic for s in train) - 100) <= 2
        assert abs(sum(s.baseline_myopic for s in val) - 20) <= 2

    @pytest.mark.parametrize("count,frac", [(300, 0.2), (451, 0.13), (1000, 0.37)])
    def test_prevalence_gap(self, count, frac):
        train, val = split(mixed_samples(count, frac), SplitSpec(seed=9))
        gap = abs(np.mean([s.baseline_myopic for s in train]) - np.mean([s.baseline_myopic for s in val]))
        assert gap <= 0.02

    def test_partition(self):
        samples = mixed_samples(50, 0.3)
        train, val = split(samples, SplitSpec(seed=2))
        keys = lambda xs: {s.key for s in xs}
        assert keys(train) | keys(val) == keys(samples)
        assert not keys(train) & keys(val)

    def test_subject_grouped_with_sliding(self):
        recs = [make_record(f"S{i}", [0.5] * 6) for i in range(24)]
        samples = build_samples(recs, 1, 1, windows="sliding")
        train, val = split(samples, SplitSpec(seed=0))
        assert not {s.subject_id for s in train} & {s.subject_id for s in val}

    def test_deterministic(self):
        samples = mixed_samples(60, 0.25)
        a = split(samples, SplitSpec(seed=5))
        b = split(samples, SplitSpec(seed=5))
        assert [s.key for s in a[0]] == [s.key for s in b[0]]

    def test_split_file_roundtrip(self, tmp_path):
        samples = mixed_samples(40, 0.25)
        train, val = split(samples, SplitSpec(seed=3))
        write_split(tmp_path / "split.csv", train, val)
        train2, val2 = read_split(tmp_path / "split.csv", samples)
        assert [s.key for s in train2] == [s.key for s in train]
        assert [s.key for s in val2] == [s.key for s in val]

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SplitSpec(train_fraction=1.0)


class TestStats:
    def test_single_sample(self):
        rec = make_record("A", [-1.0, -2.0])
        (s,) = build_samples([rec], 1, 1)
        row = cohort_stats([s], "1p1", "Training")
        assert row["SER(D)"] == -1.0 and row["Num"] == 1 and row["Sex (M%)"] == 1.0
        assert row["Mild Myopia"] == 1.0 and row["Moderate and High Myopia"] == 0.0

    def test_mean_ser(self):
        samples = build_samples([make_record("A", [1.0, 0.0]), make_record("B", [-1.0, 0.0])], 1, 1)
        assert cohort_stats(samples)["SER(D)"] == 0.0

    def test_ser_is_linear_in_columns(self, small_cohort):
        for row in stats_table(small_cohort.records):
            assert row["SER(D)"] == pytest.approx(row["DS (D)"] + row["DC (D)"] / 2, abs=1e-9)

    def test_table_columns(self, small_cohort, tmp_path):
        rows = stats_table(small_cohort.records)
        write_stats(tmp_path / "stats.csv", rows)
        with open(tmp_path / "stats.csv", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        assert header == STATS_COLUMNS
        assert {r["Model"] for r in rows} == {pair_name(n, m) for n, m in valid_pairs()}

    def test_empty(self):
        with pytest.raises(ValueError):
            cohort_stats([])


class TestManifest:
    def test_roundtrip(self, small_cohort, tmp_path):
        write_manifest(tmp_path / "m.csv", small_cohort.records)
        back = read_manifest(tmp_path / "m.csv")
        assert [r.subject_id for r in back] == [r.subject_id for r in small_cohort.records]
        for a, b in zip(back, small_cohort.records):
            assert a.visits == b.visits

    def test_row_numbered_errors(self, tmp_path):
        path = tmp_path / "bad.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MANIFEST_COLUMNS)
            w.writerow(["A", "M", "2500", "0", "a0.png", "1.0", "-0.5", "10", "", ""])
            w.writerow(["A", "M", "2500", "1", "a1.png", "oops", "-0.5", "10", "", ""])
            w.writerow(["B", "Q", "2500", "7", "", "1", "0", "200", "", ""])
        with pytest.raises(ManifestError) as info:
            read_manifest(path)
        problems = info.value.problems
        assert any(p.startswith("row 2:") and "sphere_d" in p for p in problems)
        assert sum(p.startswith("row 3:") for p in problems) >= 3

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject_id,sex\nA,M\n")
        with pytest.raises(ManifestError):
            read_manifest(path)


class TestSynth:
    def test_deterministic(self, tmp_path):
        p = SynthParams(subjects=5, image_side=32)
        a, b = synth_cohort(p, seed=3), synth_cohort(p, seed=3)
        a.save(tmp_path / "a")
        b.save(tmp_path / "b")
        assert (tmp_path / "a" / "manifest.csv").read_bytes() == (tmp_path / "b" / "manifest.csv").read_bytes()
        for ref in a.images:
            assert (tmp_path / "a" / ref).read_bytes() == (tmp_path / "b" / ref).read_bytes()

    def test_flat_trajectory(self):
        p = SynthParams(subjects=4, slow_rate=(0.0, 0.0), fast_rate=(0.0, 0.0), noise_sd=0.0)
        for rec in synth_cohort(p, seed=1, render=False).records:
            sers = [v.ser for v in rec.visits.values()]
            assert max(sers) - min(sers) < 1e-9

    def test_prevalence_increases(self):
        cohort = synth_cohort(SynthParams(subjects=600), seed=0, render=False)
        y0 = sum(domain.is_myopic(r.visits[0].ser) for r in cohort.records)
        y5 = sum(domain.is_myopic(r.visits[5].ser) for r in cohort.records)
        assert y5 > y0

    def test_texture_monotone(self):
        rates = np.linspace(-0.5, 2.5, 31)
        amps = [texture_amplitude(0.0, r) for r in rates]
        assert np.all(np.diff(amps) >= 0)
        sers = np.linspace(2.0, -10.0, 31)
        assert np.all(np.diff([texture_amplitude(s, 0.5) for s in sers]) >= 0)

    def test_missing_visits(self):
        cohort = synth_cohort(SynthParams(subjects=40, missing_visit_prob=0.3), seed=2, render=False)
        assert any(len(r.visits) < 6 for r in cohort.records)

    @pytest.mark.parametrize("kw", [{"subjects": 0}, {"fast_weight": 1.5}, {"noise_sd": -0.1}, {"image_side": 8}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            synth_cohort(SynthParams(**kw))

    def test_images_match_manifest(self, small_cohort):
        refs = {v.image_ref for r in small_cohort.records for v in r.visits.values()}
        assert refs == set(small_cohort.images)
        img = next(iter(small_cohort.images.values()))
        assert img.dtype == np.uint8 and img.shape == (32, 40, 3)
