"""Experiment orchestration: the four feature pipelines, dataset assembly,
training, checkpointed evaluation, and per-sequence prediction.

Silence removal always uses the expert alignment, whatever the experiment,
so every model is trained and evaluated on the identical frame set; that is
what makes per-frame error samples comparable across models in the t-test.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    DEFAULT_SILENCE_LABELS,
    ContourScaler,
    ContourSequence,
    SequenceRecord,
    SplitAssignment,
    fmt_float,
    load_corpus,
    remove_silence,
    split_corpus,
    write_matrix_csv,
)
from .dsp import FeatureMatrix, FeatureScaler, MfccConfig, add_deltas, extract_mfcc
from .errors import ContractError, FormatError
from .metrics import EvalReport, aggregate_report, attach_baseline_comparison, sequence_frame_errors
from .net import (
    ModelConfig,
    ModelParams,
    TrainConfig,
    TrainHistory,
    load_checkpoint,
    model_forward,
    save_checkpoint,
    train_model,
)
from .phonfeat import PhoneInventory, SessionScaler, build_inventory, onehot_encode, softmax_rows

EXPERIMENTS = ("baseline", "w2v", "onehot-auto", "onehot-expert")

_KIND_BY_EXPERIMENT = {
    "baseline": "mfcc39",
    "w2v": "posterior61",
    "onehot-auto": "onehot",
    "onehot-expert": "onehot",
}


def worker_count() -> int:
    """Worker pool size, capped by the VTINV_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("VTINV_THREADS", "1")))
    except ValueError:
        return 1


def map_sequences(fn, records):
    n = worker_count()
    if n <= 1 or len(records) <= 1:
        return [fn(r) for r in records]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, records))


@dataclass
class FeatureContext:
    """Everything needed to turn a SequenceRecord into raw features."""

    experiment: str
    mfcc_config: MfccConfig = field(default_factory=MfccConfig)
    inventory: PhoneInventory | None = None
    session_scalers: dict[str, SessionScaler] = field(default_factory=dict)
    silence_labels: frozenset[str] = DEFAULT_SILENCE_LABELS

    @property
    def feature_kind(self) -> str:
        return _KIND_BY_EXPERIMENT[self.experiment]


def build_feature_context(
    records: list[SequenceRecord],
    experiment: str,
    mfcc_config: MfccConfig | None = None,
    silence_labels=DEFAULT_SILENCE_LABELS,
) -> FeatureContext:
    """Corpus-level feature state: the phone inventory for one-hot
    experiments, per-session posterior scalers for the phonemizer one."""
    if experiment not in EXPERIMENTS:
        raise ContractError(f"unknown experiment '{experiment}'")
    ctx = FeatureContext(
        experiment=experiment,
        mfcc_config=mfcc_config or MfccConfig(),
        silence_labels=frozenset(silence_labels),
    )
    if experiment == "onehot-auto":
        ctx.inventory = build_inventory([r.align_auto for r in records], ctx.silence_labels)
    elif experiment == "onehot-expert":
        ctx.inventory = build_inventory([r.align_expert for r in records], ctx.silence_labels)
    elif experiment == "w2v":
        by_session: dict[str, list[np.ndarray]] = {}
        for r in records:
            if r.w2v_logits is None:
                raise ContractError(
                    f"{r.session_id}/{r.seq_id} has no w2v_logits.csv, required "
                    f"by the w2v experiment"
                )
            by_session.setdefault(r.session_id, []).append(softmax_rows(r.w2v_logits))
        for session, mats in by_session.items():
            ctx.session_scalers[session] = SessionScaler().fit(mats)
    return ctx


def raw_features(record: SequenceRecord, ctx: FeatureContext) -> FeatureMatrix:
    """Per-sequence features before silence removal and split-level scaling."""
    n_frames = record.contours.n_frames
    rate = record.contours.frame_rate_hz
    if ctx.experiment == "baseline":
        if abs(1.0 / ctx.mfcc_config.hop_s - rate) > 1e-6:
            raise ContractError(
                f"mfcc hop {ctx.mfcc_config.hop_s}s does not match the contour "
                f"frame rate {rate} Hz; features would drift off the frame grid"
            )
        mfcc = extract_mfcc(record.audio, ctx.mfcc_config, n_frames)
        return add_deltas(mfcc)
    if ctx.experiment == "w2v":
        posteriors = softmax_rows(record.w2v_logits)
        return ctx.session_scalers[record.session_id].transform(posteriors)
    align = record.align_auto if ctx.experiment == "onehot-auto" else record.align_expert
    return onehot_encode(align, ctx.inventory, rate, n_frames, ctx.silence_labels)


@dataclass
class PreparedSequence:
    key: tuple[str, str]
    features: np.ndarray  # (T, D) after silence removal, before split scaling
    contours: ContourSequence  # truth after silence removal
    frame_rate_hz: float


def prepare_sequences(records: list[SequenceRecord], ctx: FeatureContext) -> list[PreparedSequence]:
    def one(record: SequenceRecord) -> PreparedSequence:
        feats = raw_features(record, ctx)
        kept, contours = remove_silence(
            feats, record.contours, record.align_expert, ctx.silence_labels
        )
        return PreparedSequence(
            key=record.key,
            features=kept.data,
            contours=contours,
            frame_rate_hz=record.contours.frame_rate_hz,
        )
    return map_sequences(one, records)


@dataclass
class ExperimentBundle:
    """A trained experiment: parameters plus every transform needed to map a
    new sequence to pixel-space contour predictions."""

    experiment: str
    params: ModelParams
    model_config: ModelConfig
    history: TrainHistory
    contour_scaler: ContourScaler
    feature_scaler: FeatureScaler | None
    ctx: FeatureContext
    split: SplitAssignment
    seed: int

    def features_for(self, prepared: PreparedSequence) -> np.ndarray:
        if self.feature_scaler is not None:
            return self.feature_scaler.transform(prepared.features)
        return prepared.features

    def predict_matrix(self, prepared: PreparedSequence) -> np.ndarray:
        z = model_forward(self.params, self.features_for(prepared))
        return z * self.contour_scaler.std_ + self.contour_scaler.mean_


def _split_lists(prepared: list[PreparedSequence], keys: list[tuple[str, str]]):
    by_key = {p.key: p for p in prepared}
    missing = [k for k in keys if k not in by_key]
    if missing:
        raise ContractError(f"sequences missing from corpus: {missing}")
    return [by_key[k] for k in keys]


def train_experiment(
    records: list[SequenceRecord],
    experiment: str,
    mcfg_base: ModelConfig | None = None,
    tcfg: TrainConfig | None = None,
    seed: int = 0,
    mfcc_config: MfccConfig | None = None,
    silence_labels=DEFAULT_SILENCE_LABELS,
    epoch_callback=None,
) -> ExperimentBundle:
    """Full training pipeline on an in-memory corpus.

    The split, feature scalers, and contour scaler all derive from the
    training split only; the input dimension is read off the feature
    pipeline for the experiment.
    """
    tcfg = tcfg or TrainConfig(seed=seed)
    keys = [r.key for r in records]
    split = split_corpus(keys, seed)
    ctx = build_feature_context(records, experiment, mfcc_config, silence_labels)
    prepared = prepare_sequences(records, ctx)

    train_seqs = _split_lists(prepared, split.train)
    val_seqs = _split_lists(prepared, split.validation)

    contour_scaler = ContourScaler().fit([p.contours for p in train_seqs])
    feature_scaler = None
    if ctx.feature_kind == "mfcc39":
        feature_scaler = FeatureScaler().fit([p.features for p in train_seqs])

    def xs(seqs):
        if feature_scaler is not None:
            return [feature_scaler.transform(p.features) for p in seqs]
        return [p.features for p in seqs]

    def ys(seqs):
        return [contour_scaler.transform(p.contours) for p in seqs]

    input_dim = prepared[0].features.shape[1]
    mcfg = ModelConfig(
        input_dim=input_dim,
        dense_units=mcfg_base.dense_units if mcfg_base else 300,
        lstm_units=mcfg_base.lstm_units if mcfg_base else 300,
        output_dim=mcfg_base.output_dim if mcfg_base else 800,
        seed=seed,
    )
    params, history = train_model(
        xs(train_seqs), ys(train_seqs), xs(val_seqs), ys(val_seqs),
        mcfg, tcfg, epoch_callback=epoch_callback,
    )
    return ExperimentBundle(
        experiment=experiment,
        params=params,
        model_config=mcfg,
        history=history,
        contour_scaler=contour_scaler,
        feature_scaler=feature_scaler,
        ctx=ctx,
        split=split,
        seed=seed,
    )


def evaluate_experiment(
    bundle: ExperimentBundle,
    records: list[SequenceRecord],
    split_name: str,
    residual: str = "coordinate",
    baseline_report: EvalReport | None = None,
) -> EvalReport:
    """Aggregate per-frame errors over one split into a report, optionally
    attaching baseline significance. Frames concatenate in split key order."""
    keys = {
        "train": bundle.split.train,
        "val": bundle.split.validation,
        "test": bundle.split.test,
    }.get(split_name)
    if keys is None:
        raise ContractError(f"unknown split '{split_name}'")
    prepared = _split_lists(prepare_sequences(records, bundle.ctx), keys)
    rmse_parts = []
    med_parts = []
    for p in prepared:
        pred = bundle.predict_matrix(p)
        pred_frames = pred.reshape(pred.shape[0], 8, 50, 2)
        rmse, med = sequence_frame_errors(pred_frames, p.contours.frames, residual)
        rmse_parts.append(rmse)
        med_parts.append(med)
    rmse_all = np.concatenate(rmse_parts, axis=0)
    med_all = np.concatenate(med_parts, axis=0)
    report = aggregate_report(rmse_all, med_all)
    if baseline_report is not None:
        attach_baseline_comparison(report, rmse_all, baseline_report, rmse_all.shape[0])
    return report


# ---------------------------------------------------------------------------
# checkpoint round-trip for trained experiments

def save_experiment(path: str, bundle: ExperimentBundle) -> None:
    extra_config = {
        "experiment": bundle.experiment,
        "feature_kind": bundle.ctx.feature_kind,
        "silence_labels": ",".join(sorted(bundle.ctx.silence_labels)),
        "split_seed": str(bundle.seed),
    }
    extra_arrays = {
        "contour.mean": bundle.contour_scaler.mean_,
        "contour.std": bundle.contour_scaler.std_,
    }
    if bundle.ctx.inventory is not None:
        extra_config["inventory"] = " ".join(bundle.ctx.inventory.labels)
    if bundle.feature_scaler is not None:
        extra_arrays["feature.mean"] = bundle.feature_scaler.mean_
        extra_arrays["feature.std"] = bundle.feature_scaler.std_
    if bundle.ctx.feature_kind == "mfcc39":
        cfg = bundle.ctx.mfcc_config
        extra_config.update(
            {
                "mfcc.window_s": fmt_float(cfg.window_s),
                "mfcc.hop_s": fmt_float(cfg.hop_s),
                "mfcc.fft_size": str(cfg.fft_size),
                "mfcc.n_mel_filters": str(cfg.n_mel_filters),
                "mfcc.n_ceps": str(cfg.n_ceps),
                "mfcc.preemphasis": fmt_float(cfg.preemphasis),
                "mfcc.mel_fmin_hz": fmt_float(cfg.mel_fmin_hz),
                "mfcc.mel_fmax_hz": fmt_float(cfg.mel_fmax_hz),
                "mfcc.log_floor": fmt_float(cfg.log_floor),
            }
        )
    save_checkpoint(path, bundle.params, bundle.model_config, extra_config, extra_arrays)


def load_experiment(path: str, records: list[SequenceRecord]) -> ExperimentBundle:
    """Rebuild a usable bundle from a checkpoint plus the corpus it targets.

    Scalers and inventory come from the checkpoint; per-session posterior
    statistics are recomputed from the corpus (they are session-level, not
    split-level, so this is exact). The split is re-derived from the stored
    seed over the corpus keys.
    """
    ckpt = load_checkpoint(path)
    experiment = ckpt.config.get("experiment")
    if experiment not in EXPERIMENTS:
        raise FormatError(f"{path}: missing or unknown experiment tag")
    silence = frozenset(
        s for s in ckpt.config.get("silence_labels", "").split(",") if s
    ) or DEFAULT_SILENCE_LABELS
    mfcc_config = MfccConfig()
    if experiment == "baseline":
        mfcc_config = MfccConfig(
            window_s=float(ckpt.config["mfcc.window_s"]),
            hop_s=float(ckpt.config["mfcc.hop_s"]),
            fft_size=int(ckpt.config["mfcc.fft_size"]),
            n_mel_filters=int(ckpt.config["mfcc.n_mel_filters"]),
            n_ceps=int(ckpt.config["mfcc.n_ceps"]),
            preemphasis=float(ckpt.config["mfcc.preemphasis"]),
            mel_fmin_hz=float(ckpt.config["mfcc.mel_fmin_hz"]),
            mel_fmax_hz=float(ckpt.config["mfcc.mel_fmax_hz"]),
            log_floor=float(ckpt.config["mfcc.log_floor"]),
        )
    ctx = build_feature_context(records, experiment, mfcc_config, silence)
    if "inventory" in ckpt.config:
        stored = PhoneInventory(ckpt.config["inventory"].split())
        if ctx.inventory is not None and stored != ctx.inventory:
            raise ContractError(
                "corpus phone inventory does not match the checkpoint's; "
                "the model cannot be applied to this corpus"
            )
        ctx.inventory = stored

    contour_scaler = ContourScaler()
    contour_scaler.mean_ = ckpt.arrays["contour.mean"].ravel()
    contour_scaler.std_ = ckpt.arrays["contour.std"].ravel()
    feature_scaler = None
    if "feature.mean" in ckpt.arrays:
        feature_scaler = FeatureScaler()
        feature_scaler.mean_ = ckpt.arrays["feature.mean"].ravel()
        feature_scaler.std_ = ckpt.arrays["feature.std"].ravel()

    seed = int(ckpt.config.get("split_seed", ckpt.model_config.seed))
    split = split_corpus([r.key for r in records], seed)
    return ExperimentBundle(
        experiment=experiment,
        params=ckpt.params,
        model_config=ckpt.model_config,
        history=TrainHistory(),
        contour_scaler=contour_scaler,
        feature_scaler=feature_scaler,
        ctx=ctx,
        split=split,
        seed=seed,
    )


def predict_sequence(
    bundle: ExperimentBundle, record: SequenceRecord
) -> ContourSequence:
    """Pixel-space predictions for every frame of one sequence (silent
    frames included; they are outside the training distribution)."""
    feats = raw_features(record, bundle.ctx)
    data = feats.data
    if bundle.feature_scaler is not None:
        data = bundle.feature_scaler.transform(data)
    z = model_forward(bundle.params, data)
    return bundle.contour_scaler.inverse_transform(z, record.contours.frame_rate_hz)


def write_feature_cache(out_root: str, record: SequenceRecord, feats: FeatureMatrix) -> str:
    seq_dir = os.path.join(out_root, record.session_id, record.seq_id)
    os.makedirs(seq_dir, exist_ok=True)
    path = os.path.join(seq_dir, f"features_{feats.kind}.csv")
    write_matrix_csv(path, feats.data)
    return path


def corpus_records(root: str) -> list[SequenceRecord]:
    return load_corpus(root)
