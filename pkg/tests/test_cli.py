import os

import numpy as np
import pytest

from vtinv._rng import Xoshiro256pp
from vtinv.cli import emit_contour_svg, main, parse_config_file, resolve_settings, UsageError
from vtinv.corpus import FrameContours, parse_contour_csv
from vtinv.metrics import EvalReport

TINY_CONFIG = """\
# tiny settings so CLI tests run in seconds
model.dense_units = 8
model.lstm_units = 8
train.max_epochs = 3
train.batch_sequences = 4
train.patience = 2
"""


@pytest.fixture(scope="module")
def trained_run(small_corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "tiny.cfg"
    cfg.write_text(TINY_CONFIG)
    run_dir = out / "expert"
    code = main([
        "train", "--corpus", small_corpus_dir, "--experiment", "onehot-expert",
        "--config", str(cfg), "--seed", "5", "--out", str(run_dir),
    ])
    assert code == 0
    return {"dir": str(run_dir), "config": str(cfg), "corpus": small_corpus_dir}


# ---------------------------------------------------------------------------
# subcommands

def test_synth_writes_requested_sequences(tmp_path):
    out = str(tmp_path / "corpus")
    assert main(["synth", "--out", out, "--seed", "1", "--sequences", "3",
                 "--frames", "25", "--inventory-size", "4"]) == 0
    dirs = [
        (s, q)
        for s in sorted(os.listdir(out))
        for q in sorted(os.listdir(os.path.join(out, s)))
    ]
    assert len(dirs) == 3


def test_train_artifacts_exist(trained_run):
    for name in ("model.ckpt", "history.csv", "report_val.csv"):
        assert os.path.exists(os.path.join(trained_run["dir"], name)), name
    with open(os.path.join(trained_run["dir"], "model.ckpt")) as fh:
        assert fh.readline().strip() == "VTINV1"


def test_eval_report_format(trained_run, tmp_path):
    report_path = str(tmp_path / "report.csv")
    code = main([
        "eval", "--corpus", trained_run["corpus"],
        "--checkpoint", os.path.join(trained_run["dir"], "model.ckpt"),
        "--split", "test", "--out", report_path,
    ])
    assert code == 0
    with open(report_path) as fh:
        report = EvalReport.from_csv(fh.read())
    assert report.mean_row.p_vs_baseline is None


def test_eval_with_baseline_report_emits_p_values(trained_run, tmp_path):
    base_path = str(tmp_path / "base.csv")
    assert main([
        "eval", "--corpus", trained_run["corpus"],
        "--checkpoint", os.path.join(trained_run["dir"], "model.ckpt"),
        "--split", "test", "--out", base_path,
    ]) == 0
    cmp_path = str(tmp_path / "cmp.csv")
    assert main([
        "eval", "--corpus", trained_run["corpus"],
        "--checkpoint", os.path.join(trained_run["dir"], "model.ckpt"),
        "--split", "test", "--baseline-report", base_path, "--out", cmp_path,
    ]) == 0
    with open(cmp_path) as fh:
        report = EvalReport.from_csv(fh.read())
    # identical model vs itself: t = 0, p = 1 on every row
    for row in report.rows + [report.mean_row]:
        assert row.p_vs_baseline == pytest.approx(1.0, abs=1e-12)


def test_predict_writes_full_sequence_contours(trained_run, tmp_path):
    out = str(tmp_path / "pred.csv")
    assert main([
        "predict", "--corpus", trained_run["corpus"],
        "--checkpoint", os.path.join(trained_run["dir"], "model.ckpt"),
        "--seq", "s01/q0000", "--out", out,
    ]) == 0
    with open(out) as fh:
        seq = parse_contour_csv(fh.read())
    assert seq.n_frames == 40


def test_plot_svg_structure(trained_run, tmp_path):
    out = str(tmp_path / "frame.svg")
    assert main([
        "plot", "--corpus", trained_run["corpus"],
        "--checkpoint", os.path.join(trained_run["dir"], "model.ckpt"),
        "--seq", "s01/q0000", "--frame", "20", "--out", out,
    ]) == 0
    with open(out) as fh:
        svg = fh.read()
    assert svg.count("<polyline") == 16
    assert svg.count("stroke-dasharray") == 8
    assert "RMSE" in svg and "mm" in svg


def test_featurize_writes_cache_and_inventory(small_corpus_dir, tmp_path):
    out = str(tmp_path / "feats")
    assert main([
        "featurize", "--corpus", small_corpus_dir,
        "--experiment", "onehot-expert", "--out", out,
    ]) == 0
    assert os.path.exists(os.path.join(out, "s01", "q0000", "features_onehot.csv"))
    with open(os.path.join(out, "inventory.txt")) as fh:
        labels = fh.read().split()
    assert len(labels) == 5


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    assert "max relative error" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# exit codes and config handling

def test_unknown_subcommand_exit_1(capsys):
    assert main(["transmogrify"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_unknown_flag_exit_1(capsys):
    assert main(["synth", "--out", "x", "--sequences", "2", "--zap"]) == 1


def test_missing_corpus_exit_2(capsys, tmp_path):
    assert main([
        "featurize", "--corpus", str(tmp_path / "nope"),
        "--experiment", "baseline", "--out", str(tmp_path / "o"),
    ]) == 2
    assert "error" in capsys.readouterr().err


def test_help_exit_0(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for sub in ("synth", "featurize", "train", "eval", "predict", "gradcheck", "plot"):
        assert sub in out


def test_bad_config_key_exit_1(tmp_path, small_corpus_dir, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.wings = 3\n")
    assert main([
        "train", "--corpus", small_corpus_dir, "--experiment", "baseline",
        "--config", str(cfg), "--out", str(tmp_path / "o"),
    ]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("train.max_epochs = 7\n")

    class Args:
        preset = "desk"
        config = str(cfg)
        seed = 3

    settings = resolve_settings(Args())
    assert settings["model.dense_units"] == "64"  # from preset
    assert settings["train.max_epochs"] == "7"    # config overrides preset
    assert settings["seed"] == "3"                # flag overrides everything


def test_parse_config_rejects_garbage(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("not a config line\n")
    with pytest.raises(UsageError):
        parse_config_file(str(cfg))


# ---------------------------------------------------------------------------
# SVG emission

def random_frame(seed):
    return FrameContours(Xoshiro256pp(seed).uniform_matrix(10, 126, (8, 50, 2)))


def test_svg_identical_frames():
    f = random_frame(1)
    svg = emit_contour_svg(f, f)
    assert svg.count("<polyline") == 16
    assert svg.count("stroke-dasharray") == 8
    assert "RMSE 0.00 mm" in svg


def test_svg_off_by_one_pixel_title():
    truth = random_frame(2)
    pred = FrameContours(truth.points + 1.0)
    svg = emit_contour_svg(pred, truth)
    assert "RMSE 1.62 mm" in svg


def test_svg_viewbox_and_colors():
    f = random_frame(3)
    svg = emit_contour_svg(f, f, title="demo")
    assert 'viewBox="0 0 136 136"' in svg
    assert svg.count("#e6194b") == 2  # same color solid + dashed per articulator
    assert "<title>demo: RMSE" in svg
