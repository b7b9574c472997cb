"""End-to-end workflow through the command line entry points."""

import json

import pytest

from storygen.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def dataset(workdir):
    out = workdir / "data"
    rc = main(
        [
            "gen-data", "--out", str(out),
            "--train", "60", "--val", "4", "--test", "6", "--seed", "11",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def codec_file(workdir, dataset):
    out = workdir / "codec.pt"
    rc = main(
        [
            "train-codec", "--data", str(dataset), "--out", str(out),
            "--epochs", "2", "--batch-size", "32", "--seed", "0",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def run_dir(workdir, dataset, codec_file):
    out = workdir / "run"
    rc = main(
        [
            "train", "--data", str(dataset), "--codec", str(codec_file),
            "--out", str(out), "--epochs", "1", "--batch-size", "16",
            "--timesteps", "10", "--base-channels", "8", "--channel-mults", "1,1",
            "--txt-dim", "16", "--seed", "0",
        ]
    )
    assert rc == 0
    return out


def test_dataset_layout(dataset):
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert manifest["split_sizes"] == {"train": 60, "val": 4, "test": 6}
    assert (dataset / "train" / "story_00000" / "frame_0.png").exists()


def test_train_writes_artifacts(run_dir):
    assert (run_dir / "latest.pt").exists()
    log = (run_dir / "runlog.csv").read_text().strip().splitlines()
    assert log[0].startswith("epoch,")
    assert len(log) >= 2


def test_resume_continues(workdir, dataset, codec_file, run_dir):
    rc = main(
        [
            "train", "--data", str(dataset), "--codec", str(codec_file),
            "--out", str(run_dir), "--epochs", "2", "--batch-size", "16",
            "--timesteps", "10", "--base-channels", "8", "--channel-mults", "1,1",
            "--txt-dim", "16", "--seed", "0", "--resume",
        ]
    )
    assert rc == 0
    log = (run_dir / "runlog.csv").read_text().strip().splitlines()
    assert len(log) == 1 + 2 * 2  # two epochs, two log rows each


def test_sample_writes_frames(workdir, run_dir):
    out = workdir / "sampled"
    rc = main(
        [
            "sample", "--ckpt", str(run_dir / "latest.pt"),
            "--text", "Tony walks on the grass.|He falls.",
            "--seed", "3", "--out", str(out),
        ]
    )
    assert rc == 0
    blob = json.loads((out / "session.json").read_text())
    assert [f["index"] for f in blob["frames"]] == [0, 1]
    assert (out / "frame_0.png").exists() and (out / "frame_1.png").exists()
    assert all(len(f["sha256"]) == 64 for f in blob["frames"])


def test_sample_requires_one_source(workdir, run_dir):
    rc = main(
        [
            "sample", "--ckpt", str(run_dir / "latest.pt"),
            "--out", str(workdir / "x"),
        ]
    )
    assert rc == 2


def test_classifier_and_eval(workdir, dataset, run_dir):
    clf = workdir / "clf.pt"
    rc = main(
        [
            "train-classifier", "--data", str(dataset), "--out", str(clf),
            "--seed", "0",
        ]
    )
    assert rc == 0
    report_path = workdir / "report.json"
    rc = main(
        [
            "eval", "--ckpt", str(run_dir / "latest.pt"), "--data", str(dataset),
            "--classifier", str(clf), "--out", str(report_path),
            "--split", "test", "--seed", "0",
        ]
    )
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["counts"]["stories"] == 6
    assert report["counts"]["frames"] == 24
    assert 0.0 <= report["overall"]["char_acc"] <= 1.0
    assert report["fid"] >= 0.0
