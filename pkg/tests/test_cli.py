import json
import subprocess
import sys

import numpy as np
import pytest

from amfm_faces import dataset as D
from amfm_faces.cli import dispatch
from amfm_faces.config import derive_seed
from amfm_faces.gabor import load_bank
from amfm_faces.hilbert import load_filter
from amfm_faces.imageio import read_pnm, write_pgm
from amfm_faces.nets import load_model

SUBCOMMANDS = [
    ["design-filter"],
    ["filterbank"],
    ["demodulate"],
    ["dataset"],
    ["dataset", "build"],
    ["dataset", "synth"],
    ["dataset", "inspect"],
    ["train"],
    ["evaluate"],
    ["pipeline"],
]


@pytest.mark.parametrize("cmd", [[]] + SUBCOMMANDS, ids=lambda c: " ".join(c) or "top")
def test_help_exits_zero(cmd, capsys):
    assert dispatch(cmd + ["--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert dispatch([]) == 1
    assert dispatch(["train"]) == 1  # missing required options
    assert dispatch(["--threads", "0", "filterbank"]) == 1
    assert dispatch(["design-filter", "--taps", "50", "--out", "/dev/null"]) == 1


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "amfm_faces.cli", "nope"], capture_output=True, text=True)
    assert res.returncode == 1


def test_design_filter(tmp_path, capsys):
    out = tmp_path / "f.txt"
    argv = ["design-filter", "--taps", "51", "--beta", "6.0", "--bits", "8", "--transition", "0.2",
            "--iters", "300", "--seed", "7", "--out", str(out)]
    assert dispatch(argv) == 0
    text = capsys.readouterr().out
    assert "annealed objective" in text
    filt = load_filter(out)
    assert filt.length == 51 and filt.on_grid() and filt.is_antisymmetric()
    first = out.read_bytes()
    assert dispatch(argv) == 0
    assert out.read_bytes() == first


def test_filterbank(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bank": {"orientations": 4}}))
    out = tmp_path / "bank.txt"
    assert dispatch(["filterbank", "--config", str(cfg), "--report", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("channel scale theta")
    assert len(lines) == 1 + 8 + 1
    assert len(load_bank(out)) == 8
    assert dispatch(["filterbank", "--out", str(out)]) == 0
    assert "channel scale" not in capsys.readouterr().out
    cfg.write_text("{broken")
    assert dispatch(["filterbank", "--config", str(cfg), "--out", str(out)]) == 1


def test_demodulate(tmp_path, rng):
    img = rng.integers(0, 256, (60, 90), dtype=np.uint8)
    write_pgm(tmp_path / "in.pgm", img)
    assert dispatch(["demodulate", str(tmp_path / "in.pgm"), "--out-dir", str(tmp_path / "o")]) == 0
    for name in ("ia", "ip", "fm", "channel"):
        assert read_pnm(tmp_path / "o" / f"{name}.pgm").shape == (60, 90)
    assert dispatch(["demodulate", str(tmp_path / "missing.pgm")]) == 2


@pytest.fixture(scope="module")
def cli_workdir(tmp_path_factory):
    """Synthetic frames -> dataset -> both models, all through the CLI."""
    wd = tmp_path_factory.mktemp("cli")
    assert dispatch(["dataset", "synth", "--videos", "2", "--frames", "2", "--seed", "3",
                     "--out-dir", str(wd / "frames")]) == 0
    with pytest.warns(UserWarning):
        assert dispatch(["dataset", "build", "--frames-dir", str(wd / "frames"), "--input-kind", "original",
                         "--out", str(wd / "noann.afmd")]) == 0
    assert dispatch(["dataset", "build", "--frames-dir", str(wd / "frames"), "--annotations",
                     str(wd / "frames" / "annotations.csv"), "--input-kind", "fm",
                     "--out", str(wd / "ds.afmd")]) == 0
    assert dispatch(["train", "--train", str(wd / "ds.afmd"), "--val", str(wd / "ds.afmd"), "--epochs", "2",
                     "--history", str(wd / "h.csv"), "--out", str(wd / "single.afmn")]) == 0
    assert dispatch(["train", "--train", str(wd / "ds.afmd"), "--net", "multi", "--single-model",
                     str(wd / "single.afmn"), "--epochs", "2", "--out", str(wd / "multi.afmn")]) == 0
    return wd


def test_dataset_build_matches_library(cli_workdir, hilbert_filter, bank):
    frames, rects = D.synth_corpus(derive_seed(3, "corpus"), 2, 2)
    ref = D.build_dataset(frames, rects, "fm", hilbert_filter, bank)
    ds = D.load_dataset(cli_workdir / "ds.afmd")
    np.testing.assert_array_equal(ds.blocks, ref.blocks)
    np.testing.assert_array_equal(ds.targets, ref.targets)
    assert ds.provenance == ref.provenance
    assert not D.load_dataset(cli_workdir / "noann.afmd").targets.any()


def test_dataset_inspect(cli_workdir, capsys):
    capsys.readouterr()
    assert dispatch(["dataset", "inspect", str(cli_workdir / "ds.afmd")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "count 180"
    assert out[1] == "block 50x50x1"
    assert out[2] == "input_kind fm"
    assert out[3] == "frames 4"


def test_train_outputs(cli_workdir):
    assert load_model(cli_workdir / "single.afmn").spec.name == "single-block"
    assert load_model(cli_workdir / "multi.afmn").spec.name == "multi-block"
    assert len((cli_workdir / "h.csv").read_text().splitlines()) == 3


def test_train_multi_needs_single(cli_workdir):
    assert dispatch(["train", "--train", str(cli_workdir / "ds.afmd"), "--net", "multi",
                     "--out", str(cli_workdir / "x.afmn")]) == 1


def test_evaluate(cli_workdir, capsys):
    out = cli_workdir / "report"
    assert dispatch(["evaluate", "--dataset", str(cli_workdir / "ds.afmd"), "--single-model",
                     str(cli_workdir / "single.afmn"), "--multi-model", str(cli_workdir / "multi.afmn"),
                     "--history", str(cli_workdir / "h.csv"), "--overlay-frames", "1", "--out-dir", str(out)]) == 0
    assert capsys.readouterr().out.startswith("AUC ")
    names = sorted(p.name for p in out.iterdir())
    assert names == ["history.csv", "loss.svg", "overlay_v00_0.ppm", "roc.csv", "roc.svg"]


def test_data_errors_exit_two(cli_workdir, tmp_path):
    bad = tmp_path / "bad.afmd"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert dispatch(["dataset", "inspect", str(bad)]) == 2
    assert dispatch(["dataset", "inspect", str(tmp_path / "missing.afmd")]) == 2
    # no positive blocks: the ROC is undefined
    assert dispatch(["evaluate", "--dataset", str(cli_workdir / "noann.afmd"), "--single-model",
                     str(cli_workdir / "single.afmn"), "--out-dir", str(tmp_path / "r")]) == 2


def test_pipeline_small(tmp_path, capsys):
    cfg = {
        "corpus": {"n_videos": 3, "frames_per_video": 1},
        "split": {"n_train": 2, "validation_fraction": 0.0},
        "hilbert": {"sa_iterations": 200},
        "train_single": {"epochs": 1},
        "train_multi": {"epochs": 1},
        "evaluation": {"overlay_frames": 1},
        "paths": {"save_datasets": True},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert dispatch(["pipeline", "--config", str(path), "--seed", "7", "--out-dir", str(tmp_path / "run")]) == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["blocks"]["total"] == 135 and line["blocks"]["test"] == 45
    run = tmp_path / "run"
    for name in ("filter.txt", "bank.txt", "single.afmn", "multi.afmn", "summary.json", "train.afmd", "test.afmd"):
        assert (run / name).is_file()
    assert (run / "reports" / "multi" / "overlay_v02_0.ppm").is_file()
    summary = json.loads((run / "summary.json").read_text())
    assert summary["params"] == {"single": 20645, "multi": 7045}
