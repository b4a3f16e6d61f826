"""Command-line entry point.

Subcommands: synth, featurize, train, eval, predict, gradcheck, plot.
Exit codes: 0 success, 1 usage/config error, 2 data or contract error.
Settings resolve in increasing precedence: built-in defaults, --preset,
config file (flat `key = value` lines), explicit flags. Every run logs its
resolved configuration and seed to stderr; output files never contain
timestamps, so identical flags reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .corpus import (
    DEFAULT_SILENCE_LABELS,
    IMAGE_SIZE_PX,
    ARTICULATORS,
    FrameContours,
    load_sequence_dir,
    write_contour_csv,
)
from .dsp import MfccConfig
from .errors import ContractError, FormatError, VtinvError
from .metrics import EvalReport, frame_errors
from .net import ModelConfig, TrainConfig, grad_check
from .pipeline import (
    EXPERIMENTS,
    map_sequences,
    build_feature_context,
    corpus_records,
    evaluate_experiment,
    load_experiment,
    predict_sequence,
    raw_features,
    save_experiment,
    train_experiment,
    write_feature_cache,
)
from .synth import SynthSpec, generate_corpus

log = logging.getLogger("vtinv")

ARTICULATOR_COLORS = (
    "#e6194b",  # arytenoid
    "#3cb44b",  # epiglottis
    "#4363d8",  # lower_lip
    "#f58231",  # pharyngeal_wall
    "#911eb4",  # velum
    "#46f0f0",  # tongue
    "#f032e6",  # upper_lip
    "#9a6324",  # vocal_folds
)

PRESETS = {
    "desk": {"model.dense_units": "64", "model.lstm_units": "64", "train.max_epochs": "30"},
    "paper": {"model.dense_units": "300", "model.lstm_units": "300", "train.max_epochs": "300"},
}

_INT_KEYS = {
    "model.dense_units", "model.lstm_units",
    "train.max_epochs", "train.batch_sequences", "train.patience",
    "mfcc.fft_size", "mfcc.n_mel_filters", "mfcc.n_ceps",
    "seed",
}
_FLOAT_KEYS = {
    "train.learning_rate",
    "mfcc.window_s", "mfcc.hop_s", "mfcc.preemphasis",
    "mfcc.mel_fmin_hz", "mfcc.mel_fmax_hz", "mfcc.log_floor",
}
_STR_KEYS = {"eval.residual", "corpus.silence_labels"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS

_DEFAULTS = {
    "model.dense_units": "300",
    "model.lstm_units": "300",
    "train.max_epochs": "300",
    "train.batch_sequences": "10",
    "train.patience": "10",
    "train.learning_rate": "0.001",
    "mfcc.window_s": "0.025",
    "mfcc.hop_s": "0.020",
    "mfcc.fft_size": "512",
    "mfcc.n_mel_filters": "26",
    "mfcc.n_ceps": "13",
    "mfcc.preemphasis": "0.97",
    "mfcc.mel_fmin_hz": "0",
    "mfcc.mel_fmax_hz": "8000",
    "mfcc.log_floor": "1e-10",
    "eval.residual": "coordinate",
    "corpus.silence_labels": ",".join(sorted(DEFAULT_SILENCE_LABELS)),
    "seed": "0",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path} line {line_no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _ALL_KEYS:
            raise UsageError(f"{path} line {line_no}: unknown config key '{key}'")
        values[key] = value.strip()
    return values


def resolve_settings(args) -> dict[str, str]:
    """defaults < preset < config file < explicit flags."""
    settings = dict(_DEFAULTS)
    preset = getattr(args, "preset", None)
    if preset:
        settings.update(PRESETS[preset])
    config_path = getattr(args, "config", None)
    if config_path:
        settings.update(parse_config_file(config_path))
    if getattr(args, "seed", None) is not None:
        settings["seed"] = str(args.seed)
    return settings


def _typed(settings: dict[str, str], key: str):
    raw = settings[key]
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise UsageError(f"config key '{key}' has non-numeric value '{raw}'") from None
    return raw


def _mfcc_config(settings) -> MfccConfig:
    return MfccConfig(
        window_s=_typed(settings, "mfcc.window_s"),
        hop_s=_typed(settings, "mfcc.hop_s"),
        fft_size=_typed(settings, "mfcc.fft_size"),
        n_mel_filters=_typed(settings, "mfcc.n_mel_filters"),
        n_ceps=_typed(settings, "mfcc.n_ceps"),
        preemphasis=_typed(settings, "mfcc.preemphasis"),
        mel_fmin_hz=_typed(settings, "mfcc.mel_fmin_hz"),
        mel_fmax_hz=_typed(settings, "mfcc.mel_fmax_hz"),
        log_floor=_typed(settings, "mfcc.log_floor"),
    )


def _silence_labels(settings) -> frozenset[str]:
    return frozenset(
        s for s in settings["corpus.silence_labels"].split(",") if s
    ) or DEFAULT_SILENCE_LABELS


def _log_settings(command: str, settings: dict[str, str]) -> None:
    resolved = " ".join(f"{k}={settings[k]}" for k in sorted(settings))
    log.info("%s: resolved settings: %s", command, resolved)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_sequences=args.sequences,
        frames_per_sequence=args.frames,
        inventory_size=args.inventory_size,
        seed=args.seed if args.seed is not None else 0,
    )
    log.info(
        "synth: %d sequences x %d frames, inventory %d, seed %d -> %s",
        spec.n_sequences, spec.frames_per_sequence, spec.inventory_size,
        spec.seed, args.out,
    )
    keys = generate_corpus(spec, args.out)
    log.info("synth: wrote %d sequences", len(keys))
    return 0


def cmd_featurize(args) -> int:
    settings = resolve_settings(args)
    _log_settings("featurize", settings)
    records = corpus_records(args.corpus)
    ctx = build_feature_context(
        records, args.experiment, _mfcc_config(settings), _silence_labels(settings)
    )
    all_feats = map_sequences(lambda r: raw_features(r, ctx), records)
    for record, feats in zip(records, all_feats):
        path = write_feature_cache(args.out, record, feats)
        log.debug("featurize: wrote %s", path)
    if ctx.inventory is not None:
        with open(os.path.join(args.out, "inventory.txt"), "w") as fh:
            fh.write(ctx.inventory.to_text())
    log.info("featurize: %d sequences -> %s", len(records), args.out)
    return 0


def cmd_train(args) -> int:
    settings = resolve_settings(args)
    _log_settings("train", settings)
    seed = int(settings["seed"])
    records = corpus_records(args.corpus)
    mcfg_base = ModelConfig(
        input_dim=1,  # replaced by the pipeline once features are known
        dense_units=_typed(settings, "model.dense_units"),
        lstm_units=_typed(settings, "model.lstm_units"),
        seed=seed,
    )
    tcfg = TrainConfig(
        max_epochs=_typed(settings, "train.max_epochs"),
        batch_sequences=_typed(settings, "train.batch_sequences"),
        patience=_typed(settings, "train.patience"),
        seed=seed,
        learning_rate=_typed(settings, "train.learning_rate"),
    )

    def progress(epoch, train_mse, val_mse, state):
        log.info("epoch %d: train mse %.6f, val mse %.6f", epoch, train_mse, val_mse)

    bundle = train_experiment(
        records,
        args.experiment,
        mcfg_base=mcfg_base,
        tcfg=tcfg,
        seed=seed,
        mfcc_config=_mfcc_config(settings),
        silence_labels=_silence_labels(settings),
        epoch_callback=progress,
    )
    os.makedirs(args.out, exist_ok=True)
    save_experiment(os.path.join(args.out, "model.ckpt"), bundle)
    with open(os.path.join(args.out, "history.csv"), "w") as fh:
        fh.write(bundle.history.to_csv())
    report = evaluate_experiment(bundle, records, "val", settings["eval.residual"])
    with open(os.path.join(args.out, "report_val.csv"), "w") as fh:
        fh.write(report.to_csv())
    log.info(
        "train: best epoch %d (val mse %.6f), stopped at %d; artifacts in %s",
        bundle.history.best_epoch, bundle.history.best_val_mse,
        bundle.history.stopped_epoch, args.out,
    )
    return 0


def cmd_eval(args) -> int:
    settings = resolve_settings(args)
    _log_settings("eval", settings)
    records = corpus_records(args.corpus)
    bundle = load_experiment(args.checkpoint, records)
    baseline = None
    if args.baseline_report:
        with open(args.baseline_report) as fh:
            baseline = EvalReport.from_csv(fh.read())
    report = evaluate_experiment(
        bundle, records, args.split, settings["eval.residual"], baseline
    )
    with open(args.out, "w") as fh:
        fh.write(report.to_csv())
    log.info(
        "eval: %s split of %s -> %s (mean rmse %.3f mm)",
        args.split, args.corpus, args.out, report.mean_row.rmse_mean_mm,
    )
    return 0


def _find_record(records, seq: str):
    if "/" in seq:
        session_id, seq_id = seq.split("/", 1)
        for r in records:
            if r.session_id == session_id and r.seq_id == seq_id:
                return r
    else:
        matches = [r for r in records if r.seq_id == seq]
        if len(matches) == 1:
            return matches[0]
        if len(matches) > 1:
            raise ContractError(f"sequence id '{seq}' is ambiguous; use session/seq")
    raise ContractError(f"sequence '{seq}' not found in corpus")


def cmd_predict(args) -> int:
    records = corpus_records(args.corpus)
    bundle = load_experiment(args.checkpoint, records)
    record = _find_record(records, args.seq)
    predicted = predict_sequence(bundle, record)
    with open(args.out, "w") as fh:
        fh.write(write_contour_csv(predicted))
    log.info("predict: %s/%s -> %s", record.session_id, record.seq_id, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    cfg = ModelConfig(input_dim=5, dense_units=8, lstm_units=8, output_dim=4, seed=seed)
    err = grad_check(cfg, n_frames=7, epsilon=1e-5)
    print(f"gradcheck: max relative error {err:.3e} (seed {seed})")
    if err >= 1e-5:
        log.error("gradcheck FAILED: %.3e >= 1e-5", err)
        return 2
    return 0


def emit_contour_svg(pred: FrameContours, truth: FrameContours, title: str = "") -> str:
    """SVG overlay: one solid polyline per articulator for the truth, one
    dashed per articulator for the prediction, fixed colors in canonical
    order; the title carries the frame's mean RMSE in millimeters."""
    errors = frame_errors(pred, truth)
    mean_rmse = float(np.mean([e.rmse_mm for e in errors]))
    rmse_text = f"RMSE {mean_rmse:.2f} mm"
    title_text = f"{title}: {rmse_text}" if title else rmse_text

    def polyline(points: np.ndarray, color: str, dashed: bool) -> str:
        coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in points)
        dash = ' stroke-dasharray="2.4 1.4"' if dashed else ""
        return (
            f'<polyline fill="none" stroke="{color}" stroke-width="0.7"{dash} '
            f'points="{coords}"/>'
        )

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {IMAGE_SIZE_PX} {IMAGE_SIZE_PX}">',
        f"<title>{title_text}</title>",
        f'<text x="3" y="9" font-size="6" font-family="sans-serif">{title_text}</text>',
    ]
    for a, name in enumerate(ARTICULATORS):
        lines.append(polyline(truth.points[a], ARTICULATOR_COLORS[a], dashed=False))
    for a, name in enumerate(ARTICULATORS):
        lines.append(polyline(pred.points[a], ARTICULATOR_COLORS[a], dashed=True))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def cmd_plot(args) -> int:
    records = corpus_records(args.corpus)
    bundle = load_experiment(args.checkpoint, records)
    record = _find_record(records, args.seq)
    predicted = predict_sequence(bundle, record)
    if not (0 <= args.frame < record.contours.n_frames):
        raise ContractError(
            f"frame {args.frame} out of range (sequence has "
            f"{record.contours.n_frames} frames)"
        )
    svg = emit_contour_svg(
        predicted.frame(args.frame),
        record.contours.frame(args.frame),
        title=f"{record.session_id}/{record.seq_id} frame {args.frame}",
    )
    with open(args.out, "w") as fh:
        fh.write(svg)
    log.info("plot: frame %d of %s/%s -> %s", args.frame, record.session_id, record.seq_id, args.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> _Parser:
    parser = _Parser(
        prog="vtinv",
        description=(
            "Vocal-tract contour inversion experiments. Settings precedence: "
            "defaults < --preset < --config file < explicit flags."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences", type=int, required=True)
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--inventory-size", type=int, default=12)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="write per-sequence feature caches")
    p.add_argument("--corpus", required=True)
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one experiment end to end")
    p.add_argument("--corpus", required=True)
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True, choices=("train", "val", "test"))
    p.add_argument("--baseline-report")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write predicted contours for one sequence")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seq", required=True, help="session/seq or unique seq id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="SVG overlay of predicted vs true contours")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help prints and exits 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (VtinvError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
