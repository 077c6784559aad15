import csv
import json

import numpy as np
import pytest

from myopred import cli
from myopred.cli import derive_seed, main
from myopred.cohort import MANIFEST_COLUMNS
from myopred.evaluation import METRIC_COLUMNS
from myopred.model import TrainingDiverged


def run_pipeline(root, seed=5, subjects=24):
    """synth -> preprocess -> split -> train -> eval -> predict -> sweep, all in-process."""
    c, e, s, t, ev, p, sw = (str(root / d) for d in ("c", "e", "s", "t", "ev", "p", "sw"))
    data = ["--manifest", f"{c}/manifest.csv", "--enhanced", e]
    steps = [
        ["synth", "--out", c, "--subjects", str(subjects), "--image-side", "32", "--seed", str(seed)],
        ["preprocess", "--manifest", f"{c}/manifest.csv", "--out", e, "--side", "16"],
        ["split", "--manifest", f"{c}/manifest.csv", "--out", s, "--n", "2", "--m", "2", "--seed", str(seed)],
        ["train", *data, "--split", f"{s}/split.csv", "--out", t, "--n", "2", "--m", "2",
         "--preset", "tiny", "--seed", str(seed)],
        ["eval", *data, "--split", f"{s}/split.csv", "--checkpoint", f"{t}/model.mmpn", "--out", ev],
        ["predict", *data, "--checkpoint", f"{t}/model.mmpn", "--out", p],
        ["sweep", "--predictions", f"{p}/predictions.csv", "--out", sw],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return root


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("run"))


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestPipeline:
    def test_outputs_present(self, pipeline):
        for rel in ("c/manifest.csv", "c/rates.csv", "e/rejections.csv", "s/split.csv", "t/model.mmpn",
                    "t/model.json", "t/training_log.csv", "t/training.png", "ev/metrics.csv", "ev/metrics.json",
                    "ev/sweep_2p2.csv", "ev/sweep_2p2.png", "ev/roc_2p2.png", "p/predictions.csv",
                    "sw/sweep.csv", "sw/sweep.png", "sw/sweep.json"):
            assert (pipeline / rel).is_file(), rel

    def test_png_outputs_are_png(self, pipeline):
        for rel in ("t/training.png", "ev/roc_2p2.png", "sw/sweep.png", "ev/bland_altman_sex_2p2.png"):
            assert (pipeline / rel).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_metrics_header(self, pipeline):
        with open(pipeline / "ev/metrics.csv", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        assert header == list(METRIC_COLUMNS)
        (row,) = read_rows(pipeline / "ev/metrics.csv")
        assert row["Model"] == "2p2"
        assert float(row["MAE /D"]) >= 0

    def test_metrics_json(self, pipeline):
        doc = json.loads((pipeline / "ev/metrics.json").read_text())
        entry = doc["models"]["2p2"]
        assert set(entry) >= {"metrics", "sweep", "subgroups", "baselines"}
        assert set(entry["subgroups"]) == {"sex", "baseline_myopic"}

    def test_sweep_rows(self, pipeline):
        rows = read_rows(pipeline / "sw/sweep.csv")
        cutoffs = [float(r["cutoff"]) for r in rows]
        assert len(cutoffs) == 91
        assert -6.0 in cutoffs and -0.5 in cutoffs
        assert all(0.0 <= float(r["accuracy"]) <= 1.0 for r in rows)

    def test_sweep_matches_predictions(self, pipeline):
        preds = read_rows(pipeline / "p/predictions.csv")
        pred = np.array([float(r["pred_y2"]) for r in preds])
        true = np.array([float(r["true_y2"]) for r in preds])
        for r in read_rows(pipeline / "sw/sweep.csv"):
            x = float(r["cutoff"])
            assert float(r["accuracy"]) == np.mean((pred <= x) == (true <= x))

    def test_predictions_columns(self, pipeline):
        rows = read_rows(pipeline / "p/predictions.csv")
        assert len(rows) == 24
        assert {"sample_id", "pred_y1", "pred_y2", "true_y1", "p_myopia", "p_high_myopia"} <= set(rows[0])

    def test_explain(self, pipeline):
        out = pipeline / "x"
        argv = ["explain", "--manifest", str(pipeline / "c/manifest.csv"), "--enhanced", str(pipeline / "e"),
                "--checkpoint", str(pipeline / "t/model.mmpn"), "--out", str(out), "--set", "all"]
        assert main(argv) == 0
        pngs = sorted(p.name for p in out.glob("*.png"))
        assert len(pngs) == 4
        assert all(name.endswith(("_gradcam.png", "_guided.png")) for name in pngs)
        assert (out / "heatmaps.json").is_file()

    def test_stats(self, pipeline):
        out = pipeline / "st"
        assert main(["stats", "--manifest", str(pipeline / "c/manifest.csv"), "--out", str(out)]) == 0
        assert len(read_rows(out / "stats.csv")) >= 15


class TestDeterminism:
    def test_replay_bit_identical(self, pipeline, tmp_path):
        again = run_pipeline(tmp_path)
        for rel in ("ev/metrics.csv", "t/model.mmpn", "p/predictions.csv", "sw/sweep.csv", "s/split.csv"):
            assert (pipeline / rel).read_bytes() == (again / rel).read_bytes(), rel

    def test_derive_seed(self):
        assert derive_seed(0, "split") == derive_seed(0, "split")
        assert derive_seed(0, "split") != derive_seed(0, "init")
        assert derive_seed(0, "split") != derive_seed(1, "split")
        assert 0 <= derive_seed(7, "train") < 2**31 - 1


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"subjects": 9, "synth": {"subjects": 7, "image_side": 32}}))
        out = tmp_path / "c"
        assert main(["synth", "--config", str(cfg), "--subjects", "3", "--out", str(out)]) == 0
        doc = json.loads((out / "config.json").read_text())
        assert doc["command"] == "synth"
        assert doc["config"]["subjects"] == 3
        assert doc["config"]["image_side"] == 32
        assert doc["config"]["noise_sd"] == 0.1

    def test_file_beats_default(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"subjects": 4, "image_side": 32}}))
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
        assert len({r["subject_id"] for r in read_rows(tmp_path / "c/manifest.csv")}) == 4


class TestExitCodes:
    def test_no_command(self, capsys):
        assert main([]) == cli.EXIT_USAGE

    def test_unknown_command(self, capsys):
        assert main(["fly"]) == cli.EXIT_USAGE

    def test_missing_required(self, capsys):
        assert main(["train", "--out", "x"]) == cli.EXIT_USAGE
        err = last_error(capsys)
        assert err["exit_code"] == 1 and "--manifest" in err["message"]

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"train": {"nope": 1}}))
        assert main(["train", "--config", str(cfg)]) == cli.EXIT_USAGE

    def test_bad_manifest(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text(",".join(MANIFEST_COLUMNS) + "\nA,Q,2500,0,a.png,x,0,10,,\n")
        assert main(["stats", "--manifest", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_DATA
        err = last_error(capsys)
        assert err["exit_code"] == 2 and any(d.startswith("row 1") for d in err["details"])

    def test_missing_checkpoint(self, pipeline, tmp_path, capsys):
        argv = ["predict", "--manifest", str(pipeline / "c/manifest.csv"), "--enhanced", str(pipeline / "e"),
                "--checkpoint", str(tmp_path / "none.mmpn"), "--out", str(tmp_path / "p")]
        assert main(argv) == cli.EXIT_DATA

    def test_numeric_failure(self, monkeypatch, capsys):
        def boom(cfg):
            raise TrainingDiverged(batch_index=3, epoch=1, op="add")

        monkeypatch.setitem(cli.COMMANDS, "synth", boom)
        assert main(["synth", "--out", "unused"]) == cli.EXIT_NUMERIC
        assert last_error(capsys)["error"] == "TrainingDiverged"
