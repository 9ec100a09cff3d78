import csv
import json

import numpy as np
import pytest

from gpnowcast.cli import main


@pytest.fixture()
def synth_frame(tmp_path):
    outdir = tmp_path / "world"
    rc = main(
        [
            "synth",
            "--length", "60",
            "--features", "2",
            "--phi", "0.5",
            "--noise-std", "0.5",
            "--seed", "7",
            "--outdir", str(outdir),
        ]
    )
    assert rc == 0
    return outdir / "frame.csv"


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


class TestSynth:
    def test_spec_file_with_flag_override(self, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text("length=30\nn_features=2\nseed=1\n# comment\n")
        outdir = tmp_path / "out"
        rc = main(
            ["synth", "--spec", str(spec), "--seed", "9", "--outdir", str(outdir)]
        )
        assert rc == 0
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["params"]["spec"]["seed"] == 9
        assert manifest["params"]["spec"]["length"] == 30
        assert (outdir / "frame.csv").exists()

    def test_missing_length_is_usage_error(self, tmp_path):
        rc = main(["synth", "--outdir", str(tmp_path / "out")])
        assert rc == 2

    def test_unknown_spec_key_rejected(self, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text("length=30\nwibble=4\n")
        rc = main(["synth", "--spec", str(spec), "--outdir", str(tmp_path / "out")])
        assert rc == 2


class TestMonitor:
    def test_end_to_end(self, synth_frame, tmp_path):
        outdir = tmp_path / "mon"
        rc = main(
            [
                "monitor", str(synth_frame),
                "--w", "20", "--restarts", "1",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        rows = read_rows(outdir / "predictions.csv")
        assert len(rows) - 1 == 60 - 21
        metrics = json.loads((outdir / "metrics.json").read_text())
        assert metrics["metrics"]["rmse"] >= 0.0
        assert metrics["n_predictions"] == 39
        assert (outdir / "nowcast.png").exists()
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["command"] == "monitor"
        assert manifest["params"]["config"]["window_w"] == 20

    def test_no_figures(self, synth_frame, tmp_path):
        outdir = tmp_path / "mon"
        rc = main(
            [
                "monitor", str(synth_frame),
                "--w", "20", "--restarts", "1", "--no-figures",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        assert not (outdir / "nowcast.png").exists()

    def test_frame_shorter_than_window_is_usage_error(self, synth_frame, tmp_path, capsys):
        rc = main(
            [
                "monitor", str(synth_frame),
                "--w", "60", "--restarts", "1",
                "--outdir", str(tmp_path / "mon"),
            ]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path):
        rc = main(
            [
                "monitor", str(tmp_path / "nope.csv"),
                "--w", "10",
                "--outdir", str(tmp_path / "mon"),
            ]
        )
        assert rc == 2

    def test_env_thread_resolution(self, synth_frame, tmp_path, monkeypatch):
        monkeypatch.setenv("NOWCAST_THREADS", "2")
        outdir = tmp_path / "mon"
        rc = main(
            [
                "monitor", str(synth_frame),
                "--w", "20", "--restarts", "1", "--no-figures",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["params"]["threads"] == 2

    def test_flag_overrides_env_threads(self, synth_frame, tmp_path, monkeypatch):
        monkeypatch.setenv("NOWCAST_THREADS", "4")
        outdir = tmp_path / "mon"
        rc = main(
            [
                "monitor", str(synth_frame),
                "--w", "20", "--restarts", "1", "--threads", "1", "--no-figures",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["params"]["threads"] == 1


class TestRerun:
    def test_byte_identical_outputs(self, synth_frame, tmp_path):
        first = tmp_path / "first"
        rc = main(
            [
                "monitor", str(synth_frame),
                "--w", "20", "--restarts", "1",
                "--outdir", str(first),
            ]
        )
        assert rc == 0
        second = tmp_path / "second"
        rc = main(["rerun", str(first / "manifest.json"), "--outdir", str(second)])
        assert rc == 0
        for name in ("predictions.csv", "metrics.json", "nowcast.png"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_manifest_missing_field(self, tmp_path):
        bad = tmp_path / "manifest.json"
        bad.write_text(json.dumps({"command": "monitor"}))
        rc = main(["rerun", str(bad), "--outdir", str(tmp_path / "out")])
        assert rc == 2


class TestReduce:
    def test_end_to_end(self, synth_frame, tmp_path):
        outdir = tmp_path / "red"
        rc = main(
            [
                "reduce", str(synth_frame),
                "--w", "20", "--period", "5", "--step", "2", "--restarts", "1",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        rows = read_rows(outdir / "filled.csv")
        assert len(rows) - 1 == 60
        metrics = json.loads((outdir / "metrics.json").read_text())
        assert metrics["n_imputed"] > 0
        assert (outdir / "reduction.png").exists()

    def test_step_one_is_usage_error(self, synth_frame, tmp_path, capsys):
        rc = main(
            [
                "reduce", str(synth_frame),
                "--w", "20", "--period", "5", "--step", "1",
                "--outdir", str(tmp_path / "red"),
            ]
        )
        assert rc == 2
        assert "step" in capsys.readouterr().err


class TestBaseline:
    def test_time_mode(self, synth_frame, tmp_path):
        outdir = tmp_path / "base"
        rc = main(
            [
                "baseline", str(synth_frame), "--mode", "time",
                "--w", "20", "--restarts", "1", "--no-figures",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        metrics = json.loads((outdir / "metrics.json").read_text())
        assert metrics["mode"] == "time"

    def test_feature_mode_requires_column(self, synth_frame, tmp_path):
        rc = main(
            [
                "baseline", str(synth_frame), "--mode", "feature",
                "--w", "20", "--outdir", str(tmp_path / "base"),
            ]
        )
        assert rc == 2

    def test_time_mode_rejects_column(self, synth_frame, tmp_path):
        rc = main(
            [
                "baseline", str(synth_frame), "--mode", "time", "--column", "0",
                "--w", "20", "--outdir", str(tmp_path / "base"),
            ]
        )
        assert rc == 2

    def test_column_out_of_range(self, synth_frame, tmp_path):
        rc = main(
            [
                "baseline", str(synth_frame), "--mode", "feature", "--column", "9",
                "--w", "20", "--restarts", "1",
                "--outdir", str(tmp_path / "base"),
            ]
        )
        assert rc == 2


class TestPrepare:
    def test_plain_means(self, tmp_path):
        posts = tmp_path / "posts.csv"
        posts.write_text(
            "time_index,user_id,f_0,f_1\n"
            "0,u1,1.0,2.0\n"
            "0,u2,3.0,4.0\n"
            "1,u1,5.0,6.0\n"
        )
        outdir = tmp_path / "prep"
        rc = main(
            ["prepare", str(posts), "--no-trust", "--no-clusters",
             "--outdir", str(outdir)]
        )
        assert rc == 0
        rows = read_rows(outdir / "covariates.csv")
        assert rows[1][3:] == ["2.0", "3.0"]
        assert rows[2][3:] == ["5.0", "6.0"]
        report = json.loads((outdir / "prepare_report.json").read_text())
        assert report["n_posts_read"] == 3
        assert report["stale_buckets"] == []

    def test_carry_forward_reported(self, tmp_path):
        posts = tmp_path / "posts.csv"
        posts.write_text(
            "time_index,user_id,f_0\n0,u1,1.0\n2,u2,5.0\n"
        )
        outdir = tmp_path / "prep"
        rc = main(
            ["prepare", str(posts), "--outdir", str(outdir)]
        )
        assert rc == 0
        report = json.loads((outdir / "prepare_report.json").read_text())
        assert report["stale_buckets"] == [1]

    def test_trust_requires_users(self, tmp_path):
        posts = tmp_path / "posts.csv"
        posts.write_text("time_index,user_id,f_0\n0,u1,1.0\n")
        rc = main(
            ["prepare", str(posts), "--trust", "--outdir", str(tmp_path / "prep")]
        )
        assert rc == 2

    def test_targets_join_and_pca(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = ["time_index,user_id,f_0,f_1,f_2"]
        for t in range(12):
            for u in range(3):
                base = rng.normal()
                lines.append(
                    f"{t},user{u},{base},{base * 2.0},{rng.normal()}"
                )
        posts = tmp_path / "posts.csv"
        posts.write_text("\n".join(lines) + "\n")
        targets = tmp_path / "targets.csv"
        targets.write_text(
            "time_index,target\n"
            + "\n".join(f"{t},{100.0 + t}" for t in range(10))
            + "\n"
        )
        outdir = tmp_path / "prep"
        rc = main(
            [
                "prepare", str(posts),
                "--targets", str(targets),
                "--smooth", "2",
                "--pca", "0.95",
                "--outdir", str(outdir),
            ]
        )
        assert rc == 0
        assert (outdir / "pca.json").exists()
        rows = read_rows(outdir / "covariates.csv")
        # Smoothing with window 2 drops the first bucket: 11 rows remain.
        assert len(rows) - 1 == 11
        # Buckets 1..9 have smoothed targets; 10 and 11 fall outside the
        # targets file and stay unobserved.
        observed = [r[2] for r in rows[1:]]
        assert observed[:9] == ["1"] * 9
        assert observed[9:] == ["0", "0"]
        first_target = float(rows[1][1])
        assert first_target == pytest.approx(100.5)

    def test_drop_clusters_conflict(self, tmp_path):
        posts = tmp_path / "posts.csv"
        posts.write_text("time_index,user_id,f_0\n0,u1,1.0\n")
        rc = main(
            [
                "prepare", str(posts), "--drop-clusters", "1", "--no-clusters",
                "--outdir", str(tmp_path / "prep"),
            ]
        )
        assert rc == 2
