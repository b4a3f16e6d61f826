"""Deterministic synthetic corpus with a learnable phoneme-to-contour map.

Each pseudo-phoneme owns a prototype contour frame (smooth per-articulator
base curves plus seeded smooth deformations) and a two-sinusoid "formant"
signature. Ground-truth contours follow the per-frame phoneme prototype
through a first-order smoother that mimics coarticulation; audio is the
per-segment tone pair plus Gaussian noise; logits are a scaled one-hot over
the inventory plus noise, padded to 61 columns. Everything derives from the
seed, so generation is byte-reproducible.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from ._rng import Xoshiro256pp, derive_seed
from .corpus import (
    AUDIO_SAMPLE_RATE_HZ,
    ARTICULATORS,
    FLAT_DIM,
    POINTS_PER_CONTOUR,
    AlignmentSegment,
    ContourSequence,
    SequenceRecord,
    write_sequence_dir,
)
from .errors import ContractError

_PROTO_STREAM_TAG = 0x9201
_SEQ_STREAM_TAG = 0x53E9

W2V_COLS = 61
TONE_AMPLITUDE = 0.15
LOGIT_HIT_BONUS = 6.0
MIN_SEGMENT_S = 0.06
MAX_SEGMENT_S = 0.30
AUTO_JITTER_S = 0.02

SILENCE_LABEL = "sil"

# per-articulator deformation amplitude in pixels (tongue moves most)
_DEFORM_AMP = {
    "arytenoid": 2.5,
    "epiglottis": 4.0,
    "lower_lip": 5.0,
    "pharyngeal_wall": 1.5,
    "velum": 4.0,
    "tongue": 7.0,
    "upper_lip": 4.0,
    "vocal_folds": 2.0,
}


@dataclass(frozen=True)
class SynthSpec:
    n_sequences: int
    frames_per_sequence: int = 120
    inventory_size: int = 12  # includes the silence label
    frame_rate_hz: float = 50.0
    seed: int = 0
    coarticulation_tau_s: float = 0.04
    audio_noise_db: float = -30.0
    logit_noise_std: float = 0.5
    sequences_per_session: int = 40

    def validate(self) -> None:
        if self.n_sequences < 1:
            raise ContractError("n_sequences must be positive")
        if self.frames_per_sequence < 20:
            raise ContractError("frames_per_sequence must be at least 20")
        if not (3 <= self.inventory_size <= W2V_COLS):
            raise ContractError(f"inventory_size must be in [3, {W2V_COLS}]")
        if self.frame_rate_hz <= 0:
            raise ContractError("frame_rate_hz must be positive")
        if self.coarticulation_tau_s < 0:
            raise ContractError("coarticulation_tau_s cannot be negative")

    @property
    def labels(self) -> list[str]:
        """Full label set including silence, sorted (canonical order)."""
        phones = [f"p{k:02d}" for k in range(1, self.inventory_size)]
        return sorted(phones + [SILENCE_LABEL])


def _base_shapes() -> np.ndarray:
    """(8, 50, 2) neutral midsagittal-like layout inside the 136 px frame."""
    s = np.linspace(0.0, 1.0, POINTS_PER_CONTOUR)
    arch = np.sin(np.pi * s)
    shapes = np.zeros((len(ARTICULATORS), POINTS_PER_CONTOUR, 2))
    curves = {
        "arytenoid": (104 + 8 * s, 118 + 3 * arch),
        "epiglottis": (93 + 10 * s, 112 - 16 * s + 4 * arch),
        "lower_lip": (28 + 16 * s, 68 + 6 * arch),
        "pharyngeal_wall": (112 + 2 * arch, 50 + 62 * s),
        "velum": (84 + 14 * s, 50 - 6 * arch),
        "tongue": (38 + 58 * s, 92 - 30 * arch),
        "upper_lip": (28 + 16 * s, 48 - 6 * arch),
        "vocal_folds": (100 + 10 * s, 126 + 2 * arch),
    }
    for a, name in enumerate(ARTICULATORS):
        x, y = curves[name]
        shapes[a, :, 0] = x
        shapes[a, :, 1] = y
    return shapes


def phoneme_prototypes(spec: SynthSpec) -> dict[str, np.ndarray]:
    """One (8, 50, 2) prototype frame per label; silence keeps the neutral
    base pose. Deformations are smooth along each contour (3 harmonics)."""
    base = _base_shapes()
    rng = Xoshiro256pp(derive_seed(spec.seed, _PROTO_STREAM_TAG))
    s = np.linspace(0.0, 1.0, POINTS_PER_CONTOUR)
    protos: dict[str, np.ndarray] = {}
    for label in spec.labels:
        if label == SILENCE_LABEL:
            protos[label] = base.copy()
            continue
        frame = base.copy()
        for a, name in enumerate(ARTICULATORS):
            amp = _DEFORM_AMP[name]
            for axis in range(2):
                delta = np.zeros(POINTS_PER_CONTOUR)
                for m in range(1, 4):
                    coef_sin = rng.normals(1)[0] * amp / m
                    coef_cos = rng.normals(1)[0] * amp / m
                    delta += coef_sin * np.sin(np.pi * m * s) + coef_cos * np.cos(np.pi * m * s)
                frame[a, :, axis] += delta
        protos[label] = np.clip(frame, 2.0, 134.0)
    return protos


def phoneme_tones(spec: SynthSpec) -> dict[str, tuple[float, float]]:
    """Two formant-like frequencies per non-silence label; the stream
    continues after the prototype draws so both depend only on the seed."""
    rng = Xoshiro256pp(derive_seed(spec.seed, _PROTO_STREAM_TAG, 1))
    tones = {}
    for label in spec.labels:
        if label == SILENCE_LABEL:
            continue
        f1 = 300.0 + 1100.0 * rng.random()
        f2 = 1600.0 + 1400.0 * rng.random()
        tones[label] = (f1, f2)
    return tones


def _segment_plan(spec: SynthSpec, rng: Xoshiro256pp) -> list[AlignmentSegment]:
    """Random phoneme string with 60-300 ms segments, silence at both ends.
    Always contains at least one non-silence segment."""
    total = spec.frames_per_sequence / spec.frame_rate_hz
    phones = [lab for lab in spec.labels if lab != SILENCE_LABEL]
    lead = MIN_SEGMENT_S + rng.random() * min(MAX_SEGMENT_S - MIN_SEGMENT_S, total * 0.15)
    segments = [AlignmentSegment(0.0, lead, SILENCE_LABEL)]
    t = lead
    prev = None
    first = True
    while True:
        label = phones[rng.randbelow(len(phones))]
        while label == prev and len(phones) > 1:
            label = phones[rng.randbelow(len(phones))]
        dur = MIN_SEGMENT_S + rng.random() * (MAX_SEGMENT_S - MIN_SEGMENT_S)
        if first:
            dur = min(dur, total - t - MIN_SEGMENT_S)
            first = False
        elif t + dur > total - MIN_SEGMENT_S:
            break
        segments.append(AlignmentSegment(t, t + dur, label))
        t += dur
        prev = label
    segments.append(AlignmentSegment(t, total, SILENCE_LABEL))
    return segments


def _jitter_alignment(
    segments: list[AlignmentSegment], rng: Xoshiro256pp
) -> list[AlignmentSegment]:
    """Auto-alignment simulation: internal boundaries move by up to +/-20 ms,
    labels and segment count unchanged."""
    boundaries = [seg.start_s for seg in segments] + [segments[-1].end_s]
    jittered = list(boundaries)
    for i in range(1, len(boundaries) - 1):
        delta = (2.0 * rng.random() - 1.0) * AUTO_JITTER_S
        lo = jittered[i - 1] + 0.01
        hi = boundaries[i + 1] - 0.01
        jittered[i] = min(max(boundaries[i] + delta, lo), hi)
    return [
        AlignmentSegment(jittered[i], jittered[i + 1], seg.label)
        for i, seg in enumerate(segments)
    ]


def _label_per_frame(spec: SynthSpec, segments: list[AlignmentSegment]) -> list[str]:
    labels = []
    for t in range(spec.frames_per_sequence):
        midpoint = (t + 0.5) / spec.frame_rate_hz
        label = SILENCE_LABEL
        for seg in segments:
            if seg.start_s <= midpoint < seg.end_s:
                label = seg.label
                break
        labels.append(label)
    return labels


def _smooth_contours(
    spec: SynthSpec, frame_labels: list[str], protos: dict[str, np.ndarray]
) -> ContourSequence:
    if spec.coarticulation_tau_s == 0.0:
        alpha = 1.0
    else:
        alpha = 1.0 - math.exp(-(1.0 / spec.frame_rate_hz) / spec.coarticulation_tau_s)
    frames = np.empty((spec.frames_per_sequence, len(ARTICULATORS), POINTS_PER_CONTOUR, 2))
    state = protos[frame_labels[0]].copy()
    frames[0] = state
    for t in range(1, spec.frames_per_sequence):
        state = state + alpha * (protos[frame_labels[t]] - state)
        frames[t] = state
    return ContourSequence(frames, spec.frame_rate_hz)


def _render_audio(
    spec: SynthSpec,
    segments: list[AlignmentSegment],
    tones: dict[str, tuple[float, float]],
    rng: Xoshiro256pp,
) -> np.ndarray:
    n_samples = int(round(spec.frames_per_sequence / spec.frame_rate_hz * AUDIO_SAMPLE_RATE_HZ))
    audio = rng.normals(n_samples) * 10.0 ** (spec.audio_noise_db / 20.0)
    t_axis = np.arange(n_samples) / AUDIO_SAMPLE_RATE_HZ
    for seg in segments:
        if seg.label == SILENCE_LABEL:
            continue
        lo = int(round(seg.start_s * AUDIO_SAMPLE_RATE_HZ))
        hi = min(int(round(seg.end_s * AUDIO_SAMPLE_RATE_HZ)), n_samples)
        f1, f2 = tones[seg.label]
        t = t_axis[lo:hi]
        audio[lo:hi] += TONE_AMPLITUDE * (
            np.sin(2.0 * np.pi * f1 * t) + np.sin(2.0 * np.pi * f2 * t)
        )
    return audio


def _render_logits(
    spec: SynthSpec, frame_labels: list[str], column: dict[str, int], rng: Xoshiro256pp
) -> np.ndarray:
    T = spec.frames_per_sequence
    logits = rng.normals(T * W2V_COLS).reshape(T, W2V_COLS) * spec.logit_noise_std
    for t, label in enumerate(frame_labels):
        logits[t, column[label]] += LOGIT_HIT_BONUS
    return logits


def generate_records(spec: SynthSpec) -> list[SequenceRecord]:
    """All sequences of the corpus, in session/sequence order."""
    spec.validate()
    protos = phoneme_prototypes(spec)
    tones = phoneme_tones(spec)
    column = {lab: i for i, lab in enumerate(spec.labels)}
    records = []
    for index in range(spec.n_sequences):
        rng = Xoshiro256pp(derive_seed(spec.seed, _SEQ_STREAM_TAG, index))
        segments = _segment_plan(spec, rng)
        auto = _jitter_alignment(segments, rng)
        frame_labels = _label_per_frame(spec, segments)
        contours = _smooth_contours(spec, frame_labels, protos)
        audio = _render_audio(spec, segments, tones, rng)
        logits = _render_logits(spec, frame_labels, column, rng)
        session = f"s{index // spec.sequences_per_session + 1:02d}"
        records.append(
            SequenceRecord(
                session_id=session,
                seq_id=f"q{index:04d}",
                audio=audio,
                contours=contours,
                align_auto=auto,
                align_expert=segments,
                w2v_logits=logits,
            )
        )
    return records


def generate_corpus(spec: SynthSpec, out_root: str) -> list[tuple[str, str]]:
    """Write the corpus directory tree; returns the (session, seq) keys."""
    records = generate_records(spec)
    os.makedirs(out_root, exist_ok=True)
    for record in records:
        write_sequence_dir(out_root, record)
    return [r.key for r in records]


class ConstantContourPredictor(BaseEstimator, RegressorMixin):
    """Baseline that always predicts the training-mean contour frame,
    independent of the input features."""

    def fit(self, X, y=None):
        seqs = [X] if isinstance(X, (ContourSequence, np.ndarray)) else list(X)
        mats = [
            s.as_matrix() if isinstance(s, ContourSequence) else np.asarray(s, dtype=np.float64)
            for s in seqs
        ]
        if not mats:
            raise ContractError("ConstantContourPredictor.fit requires targets")
        stacked = np.concatenate(mats, axis=0)
        if stacked.ndim != 2 or stacked.shape[1] != FLAT_DIM:
            raise ContractError(f"targets must be (T, {FLAT_DIM}) matrices")
        self.mean_ = stacked.mean(axis=0)
        return self

    def predict(self, X) -> list[np.ndarray]:
        """X is a list of per-sequence feature matrices (or frame counts);
        only the number of frames is used."""
        if not hasattr(self, "mean_"):
            raise NotFittedError("ConstantContourPredictor is not fitted")
        out = []
        for item in X:
            n = item if isinstance(item, (int, np.integer)) else np.asarray(item).shape[0]
            out.append(np.tile(self.mean_, (int(n), 1)))
        return out
