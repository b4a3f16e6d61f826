"""Corpus data model, on-disk formats, and dataset bookkeeping.

Geometry lives in pixels throughout; millimeters appear only in evaluation.
A frame's geometry is 8 articulator contours of 50 points each, flattened in
canonical order (articulator, point, x then y) into an 800-wide vector when
matrix form is needed.
"""

from __future__ import annotations

import os
import wave
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._rng import Xoshiro256pp
from .errors import ContractError, FormatError

ARTICULATORS: tuple[str, ...] = (
    "arytenoid",
    "epiglottis",
    "lower_lip",
    "pharyngeal_wall",
    "velum",
    "tongue",
    "upper_lip",
    "vocal_folds",
)
N_ARTICULATORS = 8
POINTS_PER_CONTOUR = 50
FLAT_DIM = N_ARTICULATORS * POINTS_PER_CONTOUR * 2  # 800

PIXEL_SPACING_MM = 1.62
IMAGE_SIZE_PX = 136

DEFAULT_FRAME_RATE_HZ = 50.0
DEFAULT_SILENCE_LABELS = frozenset({"sil", "sp", "#"})

AUDIO_SAMPLE_RATE_HZ = 16000

_ART_INDEX = {name: i for i, name in enumerate(ARTICULATORS)}

CONTOUR_CSV_HEADER = "frame,articulator,point,x_px,y_px"


def fmt_float(v: float) -> str:
    """Serialize a float with 17 significant digits (lossless round-trip)."""
    return "%.17g" % v


def to_millimeters(value_px: float):
    """Convert pixel units to millimeters at the scanner's pixel spacing."""
    return value_px * PIXEL_SPACING_MM


class Point2D(NamedTuple):
    x_px: float
    y_px: float


class AlignmentSegment(NamedTuple):
    start_s: float
    end_s: float
    label: str


class FrameContours:
    """One frame's geometry: (8, 50, 2) float64 array, articulators in
    canonical order, last axis (x_px, y_px)."""

    __slots__ = ("points",)

    def __init__(self, points: np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
        if arr.shape != (N_ARTICULATORS, POINTS_PER_CONTOUR, 2):
            raise ContractError(
                f"FrameContours expects shape (8, 50, 2), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ContractError("FrameContours requires finite coordinates")
        self.points = arr

    def __getitem__(self, articulator: str) -> np.ndarray:
        return self.points[_ART_INDEX[articulator]]

    def point(self, articulator: str, index: int) -> Point2D:
        x, y = self.points[_ART_INDEX[articulator], index]
        return Point2D(float(x), float(y))

    def as_flat(self) -> np.ndarray:
        """Canonical 800-vector: articulator-major, point, x then y."""
        return self.points.reshape(FLAT_DIM).copy()

    @classmethod
    def from_flat(cls, flat: np.ndarray) -> "FrameContours":
        arr = np.asarray(flat, dtype=np.float64)
        if arr.shape != (FLAT_DIM,):
            raise ContractError(f"expected a {FLAT_DIM}-vector, got {arr.shape}")
        return cls(arr.reshape(N_ARTICULATORS, POINTS_PER_CONTOUR, 2))

    def __eq__(self, other) -> bool:
        return isinstance(other, FrameContours) and np.array_equal(
            self.points, other.points
        )

    def __repr__(self) -> str:
        return f"FrameContours(8x50, x range {self.points[..., 0].min():.1f}..{self.points[..., 0].max():.1f})"


class ContourSequence:
    """Ordered frames of contours at a fixed frame rate.

    Stored as one (T, 8, 50, 2) array; `as_matrix` gives the (T, 800) view
    used for network targets.
    """

    __slots__ = ("frames", "frame_rate_hz")

    def __init__(self, frames: np.ndarray, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ):
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[1:] != (N_ARTICULATORS, POINTS_PER_CONTOUR, 2):
            raise ContractError(
                f"ContourSequence expects shape (T, 8, 50, 2), got {arr.shape}"
            )
        if arr.shape[0] == 0:
            raise ContractError("ContourSequence requires at least one frame")
        if not (frame_rate_hz > 0):
            raise ContractError("frame_rate_hz must be positive")
        if not np.all(np.isfinite(arr)):
            raise ContractError("ContourSequence requires finite coordinates")
        self.frames = arr
        self.frame_rate_hz = float(frame_rate_hz)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def frame(self, index: int) -> FrameContours:
        return FrameContours(self.frames[index])

    def as_matrix(self) -> np.ndarray:
        return self.frames.reshape(self.n_frames, FLAT_DIM)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ) -> "ContourSequence":
        arr = np.asarray(matrix, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != FLAT_DIM:
            raise ContractError(f"expected a (T, {FLAT_DIM}) matrix, got {arr.shape}")
        return cls(
            arr.reshape(arr.shape[0], N_ARTICULATORS, POINTS_PER_CONTOUR, 2),
            frame_rate_hz,
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ContourSequence)
            and self.frame_rate_hz == other.frame_rate_hz
            and np.array_equal(self.frames, other.frames)
        )

    def __repr__(self) -> str:
        return f"ContourSequence({self.n_frames} frames @ {self.frame_rate_hz:g} Hz)"


# ---------------------------------------------------------------------------
# contour CSV format

def write_contour_csv(seq: ContourSequence) -> str:
    lines = [CONTOUR_CSV_HEADER]
    for f in range(seq.n_frames):
        frame = seq.frames[f]
        for a, art in enumerate(ARTICULATORS):
            for p in range(POINTS_PER_CONTOUR):
                x, y = frame[a, p]
                lines.append(f"{f},{art},{p},{fmt_float(x)},{fmt_float(y)}")
    return "\n".join(lines) + "\n"


def parse_contour_csv(text: str, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ) -> ContourSequence:
    """Strict reader: rows must appear in (frame, articulator, point) order
    and every frame must be complete."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != CONTOUR_CSV_HEADER:
        raise FormatError(
            f"contour CSV must start with header '{CONTOUR_CSV_HEADER}'"
        )
    rows_per_frame = N_ARTICULATORS * POINTS_PER_CONTOUR
    frames: list[np.ndarray] = []
    current = np.zeros((N_ARTICULATORS, POINTS_PER_CONTOUR, 2))
    filled = 0  # rows consumed in the current frame
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"row {row_no}: expected 5 fields, got {len(parts)}")
        f_str, art, p_str, x_str, y_str = parts
        if art not in _ART_INDEX:
            raise FormatError(f"row {row_no}: unknown articulator label '{art}'")
        try:
            f = int(f_str)
            p = int(p_str)
            x = float(x_str)
            y = float(y_str)
        except ValueError as exc:
            raise FormatError(f"row {row_no}: malformed number ({exc})") from None
        exp_frame = len(frames)
        exp_art = filled // POINTS_PER_CONTOUR
        exp_point = filled % POINTS_PER_CONTOUR
        if f != exp_frame:
            if f == exp_frame + 1 and filled != 0:
                raise FormatError(f"row {row_no}: frame {exp_frame} incomplete")
            raise FormatError(
                f"row {row_no}: non-contiguous frame index {f} (expected {exp_frame})"
            )
        if _ART_INDEX[art] != exp_art or p != exp_point:
            raise FormatError(
                f"row {row_no}: expected {ARTICULATORS[exp_art]} point {exp_point}, "
                f"got {art} point {p} (missing or out-of-order point)"
            )
        current[exp_art, exp_point] = (x, y)
        filled += 1
        if filled == rows_per_frame:
            frames.append(current.copy())
            filled = 0
    if filled != 0:
        raise FormatError(f"frame {len(frames)} incomplete ({filled} of {rows_per_frame} rows)")
    if not frames:
        raise FormatError("contour CSV contains no frames")
    return ContourSequence(np.stack(frames), frame_rate_hz)


# ---------------------------------------------------------------------------
# alignment TSV format

def write_alignment_tsv(segments: Sequence[AlignmentSegment]) -> str:
    lines = [f"{fmt_float(s.start_s)}\t{fmt_float(s.end_s)}\t{s.label}" for s in segments]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_alignment_tsv(text: str) -> list[AlignmentSegment]:
    segments: list[AlignmentSegment] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"line {line_no}: expected 3 tab-separated fields")
        try:
            start = float(parts[0])
            end = float(parts[1])
        except ValueError:
            raise FormatError(f"line {line_no}: malformed number") from None
        label = parts[2].strip()
        if not label:
            raise FormatError(f"line {line_no}: empty label")
        if start < 0:
            raise FormatError(f"line {line_no}: negative start time")
        if end <= start:
            raise FormatError(f"line {line_no}: segment end {end} <= start {start}")
        if segments and start < segments[-1].end_s:
            raise FormatError(
                f"line {line_no}: segment overlaps previous (starts at {start}, "
                f"previous ends at {segments[-1].end_s})"
            )
        segments.append(AlignmentSegment(start, end, label))
    return segments


# ---------------------------------------------------------------------------
# frame/segment time alignment

def frame_midpoint_s(frame_index: int, frame_rate_hz: float) -> float:
    return (frame_index + 0.5) / frame_rate_hz


def label_at_time(segments: Sequence[AlignmentSegment], t: float) -> str | None:
    """Label of the segment whose half-open interval [start, end) contains t,
    or None when t is uncovered."""
    for seg in segments:
        if seg.start_s <= t < seg.end_s:
            return seg.label
    return None


def retained_frame_mask(
    n_frames: int,
    frame_rate_hz: float,
    segments: Sequence[AlignmentSegment],
    silence_labels: Iterable[str] = DEFAULT_SILENCE_LABELS,
) -> np.ndarray:
    """Boolean mask of frames kept by silence removal.

    A frame survives when its midpoint falls inside a segment whose label is
    not a silence label; uncovered frames count as silence.
    """
    silence = set(silence_labels)
    mask = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        label = label_at_time(segments, frame_midpoint_s(t, frame_rate_hz))
        mask[t] = label is not None and label not in silence
    return mask


def remove_silence(
    features,
    contours: ContourSequence,
    align: Sequence[AlignmentSegment],
    silence_labels: Iterable[str] = DEFAULT_SILENCE_LABELS,
):
    """Drop silent frames from features and contours in lockstep.

    `features` is a FeatureMatrix (or bare (T, D) array); returns the same
    kind of pair with silent frames removed and order preserved.
    """
    if isinstance(features, np.ndarray):
        data = features
    else:
        data = features.data  # FeatureMatrix
    if data.shape[0] != contours.n_frames:
        raise ContractError(
            f"features have {data.shape[0]} rows but contours have "
            f"{contours.n_frames} frames"
        )
    mask = retained_frame_mask(
        contours.n_frames, contours.frame_rate_hz, align, silence_labels
    )
    kept_data = data[mask]
    kept_contours_arr = contours.frames[mask]
    if kept_contours_arr.shape[0] == 0:
        raise ContractError("silence removal dropped every frame")
    kept_contours = ContourSequence(kept_contours_arr, contours.frame_rate_hz)
    if hasattr(features, "replace_data"):
        return features.replace_data(kept_data), kept_contours
    return kept_data, kept_contours


# ---------------------------------------------------------------------------
# dataset splitting

SequenceKey = tuple[str, str]  # (session_id, seq_id)


@dataclass(frozen=True)
class SplitAssignment:
    train: list[SequenceKey]
    validation: list[SequenceKey]
    test: list[SequenceKey]

    def all_keys(self) -> list[SequenceKey]:
        return list(self.train) + list(self.validation) + list(self.test)

    def split_of(self, key: SequenceKey) -> str:
        if key in self.train:
            return "train"
        if key in self.validation:
            return "val"
        if key in self.test:
            return "test"
        raise KeyError(key)


def split_corpus(sequence_ids: Sequence[SequenceKey], seed: int) -> SplitAssignment:
    """Shuffle sequence keys (Fisher-Yates over xoshiro256++) and cut
    80/10/10 by count, flooring the two small splits with the remainder
    going to train. Same seed gives the same assignment on any platform."""
    ids = [tuple(k) for k in sequence_ids]
    n = len(ids)
    if n < 10:
        raise ContractError(
            f"need at least 10 sequences to form non-empty splits, got {n}"
        )
    if len(set(ids)) != n:
        raise ContractError("sequence ids must be unique")
    rng = Xoshiro256pp(seed)
    shuffled = list(ids)
    rng.shuffle(shuffled)
    n_val = n // 10
    n_test = n // 10
    n_train = n - n_val - n_test
    return SplitAssignment(
        train=shuffled[:n_train],
        validation=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
    )


# ---------------------------------------------------------------------------
# contour normalization

class ContourScaler(BaseEstimator, TransformerMixin):
    """Per-coordinate z-scoring of flattened contours.

    Fit on training-split sequences only; transform maps a ContourSequence
    to a (T, 800) standardized matrix, inverse_transform maps back to a
    ContourSequence in pixel space.
    """

    def __init__(self, std_floor: float = 1e-8):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        seqs = [X] if isinstance(X, ContourSequence) else list(X)
        if not seqs:
            raise ContractError("ContourScaler.fit requires at least one sequence")
        stacked = np.concatenate([s.as_matrix() for s in seqs], axis=0)
        if stacked.shape[0] < 2:
            raise ContractError("ContourScaler.fit requires at least 2 frames")
        self.mean_ = stacked.mean(axis=0)
        self.std_ = np.maximum(stacked.std(axis=0), self.std_floor)
        self.n_frames_ = stacked.shape[0]
        return self

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise NotFittedError("ContourScaler is not fitted")

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        matrix = X.as_matrix() if isinstance(X, ContourSequence) else np.asarray(X, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != FLAT_DIM:
            raise ContractError(f"expected (T, {FLAT_DIM}) contours, got {matrix.shape}")
        return (matrix - self.mean_) / self.std_

    def inverse_transform(self, Z, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ) -> ContourSequence:
        self._check_fitted()
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != FLAT_DIM:
            raise ContractError(f"expected a (T, {FLAT_DIM}) matrix, got {Z.shape}")
        return ContourSequence.from_matrix(Z * self.std_ + self.mean_, frame_rate_hz)

    def mean_frame(self) -> FrameContours:
        """The training-mean contour (what a zero network output decodes to)."""
        self._check_fitted()
        return FrameContours.from_flat(self.mean_)


# ---------------------------------------------------------------------------
# corpus directory layout

@dataclass
class SequenceRecord:
    session_id: str
    seq_id: str
    audio: np.ndarray  # float64 in [-1, 1), 16 kHz mono
    contours: ContourSequence
    align_auto: list[AlignmentSegment]
    align_expert: list[AlignmentSegment]
    w2v_logits: np.ndarray | None = None  # (T, 61) or None
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def key(self) -> SequenceKey:
        return (self.session_id, self.seq_id)

    def check_audio_sync(self) -> None:
        """Audio duration and frame count must agree within one frame."""
        audio_frames = len(self.audio) / AUDIO_SAMPLE_RATE_HZ * self.contours.frame_rate_hz
        if abs(audio_frames - self.contours.n_frames) > 1.0:
            raise ContractError(
                f"{self.session_id}/{self.seq_id}: audio spans {audio_frames:.2f} "
                f"frames but contours have {self.contours.n_frames}"
            )


def write_wav_mono16k(path: str, samples: np.ndarray) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(AUDIO_SAMPLE_RATE_HZ)
        wav.writeframes(pcm.tobytes())


def read_wav_mono16k(path: str) -> np.ndarray:
    with wave.open(path, "rb") as wav:
        if wav.getnchannels() != 1 or wav.getsampwidth() != 2:
            raise FormatError(f"{path}: need 16-bit mono PCM")
        if wav.getframerate() != AUDIO_SAMPLE_RATE_HZ:
            raise FormatError(
                f"{path}: sample rate {wav.getframerate()} != {AUDIO_SAMPLE_RATE_HZ}"
            )
        raw = wav.readframes(wav.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_matrix_csv(path: str, matrix: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(fmt_float(v) for v in row) + "\n")


def read_matrix_csv(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise FormatError(f"{path} line {line_no}: malformed number") from None
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.float64)


def _read_meta(path: str) -> dict[str, str]:
    meta = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path} line {line_no}: expected key<TAB>value")
            meta[parts[0]] = parts[1]
    for key in ("frame_rate_hz", "n_frames"):
        if key not in meta:
            raise FormatError(f"{path}: missing required key '{key}'")
    return meta


def write_sequence_dir(
    root: str,
    record: SequenceRecord,
) -> str:
    """Write one sequence in the corpus directory layout; returns its path."""
    seq_dir = os.path.join(root, record.session_id, record.seq_id)
    os.makedirs(seq_dir, exist_ok=True)
    write_wav_mono16k(os.path.join(seq_dir, "audio.wav"), record.audio)
    with open(os.path.join(seq_dir, "contours.csv"), "w") as fh:
        fh.write(write_contour_csv(record.contours))
    with open(os.path.join(seq_dir, "align_auto.tsv"), "w") as fh:
        fh.write(write_alignment_tsv(record.align_auto))
    with open(os.path.join(seq_dir, "align_expert.tsv"), "w") as fh:
        fh.write(write_alignment_tsv(record.align_expert))
    if record.w2v_logits is not None:
        write_matrix_csv(os.path.join(seq_dir, "w2v_logits.csv"), record.w2v_logits)
    meta = {
        "frame_rate_hz": fmt_float(record.contours.frame_rate_hz),
        "n_frames": str(record.contours.n_frames),
    }
    meta.update(record.meta)
    with open(os.path.join(seq_dir, "meta.tsv"), "w") as fh:
        for key in sorted(meta):
            fh.write(f"{key}\t{meta[key]}\n")
    return seq_dir


def load_sequence_dir(root: str, session_id: str, seq_id: str) -> SequenceRecord:
    seq_dir = os.path.join(root, session_id, seq_id)
    meta = _read_meta(os.path.join(seq_dir, "meta.tsv"))
    frame_rate = float(meta["frame_rate_hz"])
    n_frames = int(meta["n_frames"])
    with open(os.path.join(seq_dir, "contours.csv")) as fh:
        contours = parse_contour_csv(fh.read(), frame_rate)
    if contours.n_frames != n_frames:
        raise FormatError(
            f"{seq_dir}: meta declares {n_frames} frames, contours.csv has "
            f"{contours.n_frames}"
        )
    with open(os.path.join(seq_dir, "align_auto.tsv")) as fh:
        align_auto = parse_alignment_tsv(fh.read())
    with open(os.path.join(seq_dir, "align_expert.tsv")) as fh:
        align_expert = parse_alignment_tsv(fh.read())
    logits_path = os.path.join(seq_dir, "w2v_logits.csv")
    logits = None
    if os.path.exists(logits_path):
        logits = read_matrix_csv(logits_path)
        if logits.shape != (n_frames, 61):
            raise FormatError(
                f"{logits_path}: expected shape ({n_frames}, 61), got {logits.shape}"
            )
    record = SequenceRecord(
        session_id=session_id,
        seq_id=seq_id,
        audio=read_wav_mono16k(os.path.join(seq_dir, "audio.wav")),
        contours=contours,
        align_auto=align_auto,
        align_expert=align_expert,
        w2v_logits=logits,
        meta=meta,
    )
    record.check_audio_sync()
    return record


def list_sequence_keys(root: str) -> list[SequenceKey]:
    """All (session_id, seq_id) pairs under a corpus root, sorted."""
    keys = []
    if not os.path.isdir(root):
        raise FormatError(f"corpus root '{root}' is not a directory")
    for session in sorted(os.listdir(root)):
        session_dir = os.path.join(root, session)
        if not os.path.isdir(session_dir):
            continue
        for seq in sorted(os.listdir(session_dir)):
            if os.path.isdir(os.path.join(session_dir, seq)):
                keys.append((session, seq))
    if not keys:
        raise FormatError(f"corpus root '{root}' contains no sequences")
    return keys


def load_corpus(root: str) -> list[SequenceRecord]:
    return [load_sequence_dir(root, s, q) for s, q in list_sequence_keys(root)]
