"""Phonetic input representations: phonemizer posteriors and one-hot
alignment features.

Posterior features: 61-wide logits are softmaxed per frame, then z-scored
with a single scalar mean/std pooled over every entry of a recording
session. One-hot features: each frame takes the label of the alignment
segment containing its midpoint; silent or uncovered frames become all-zero
rows and are dropped later by silence removal, so the feature width equals
the non-silence inventory size.
"""

from __future__ import annotations

import logging
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import (
    DEFAULT_SILENCE_LABELS,
    AlignmentSegment,
    frame_midpoint_s,
    label_at_time,
)
from .dsp import FeatureMatrix
from .errors import ContractError
from .validation import as_float_matrix, check_finite

log = logging.getLogger(__name__)

W2V_LOGIT_DIM = 61


class PhoneInventory:
    """Sorted, duplicate-free phoneme label set with 0-based ranks."""

    def __init__(self, labels: Iterable[str]):
        unique = sorted(set(labels))
        if not unique:
            raise ContractError("phone inventory cannot be empty")
        if any(not lab for lab in unique):
            raise ContractError("phone inventory labels must be non-empty")
        self.labels: tuple[str, ...] = tuple(unique)
        self.index: dict[str, int] = {lab: i for i, lab in enumerate(unique)}

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, PhoneInventory) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"PhoneInventory({len(self.labels)} labels)"

    def to_text(self) -> str:
        return "\n".join(self.labels) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PhoneInventory":
        return cls([line.strip() for line in text.splitlines() if line.strip()])


def build_inventory(
    alignments: Sequence[Sequence[AlignmentSegment]],
    silence_labels: Iterable[str] = DEFAULT_SILENCE_LABELS,
) -> PhoneInventory:
    """Distinct non-silence labels across all alignment files, sorted."""
    silence = set(silence_labels)
    labels = {
        seg.label
        for segments in alignments
        for seg in segments
        if seg.label not in silence
    }
    if not labels:
        raise ContractError("no non-silence labels found in alignments")
    return PhoneInventory(labels)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to 1."""
    arr = as_float_matrix(logits, "logits")
    check_finite(arr, "logits")
    shifted = arr - arr.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class SessionScaler(BaseEstimator, TransformerMixin):
    """Per-session global standardization of posterior matrices.

    mode='scalar' pools one mean/std over every entry of every matrix in
    the session; mode='per_phoneme' keeps one mean/std per column instead.
    """

    def __init__(self, mode: str = "scalar", std_floor: float = 1e-8):
        self.mode = mode
        self.std_floor = std_floor

    def fit(self, X, y=None):
        mats = [as_float_matrix(m, "posteriors") for m in self._as_list(X)]
        if not mats:
            raise ContractError("SessionScaler.fit requires at least one matrix")
        stacked = np.concatenate(mats, axis=0)
        if self.mode == "scalar":
            self.mean_ = float(stacked.mean())
            raw_std = float(stacked.std())
            if raw_std < self.std_floor:
                log.warning(
                    "session std %.3g below floor %.3g; clamping", raw_std, self.std_floor
                )
            self.std_ = max(raw_std, self.std_floor)
        elif self.mode == "per_phoneme":
            self.mean_ = stacked.mean(axis=0)
            raw_std = stacked.std(axis=0)
            if np.any(raw_std < self.std_floor):
                log.warning(
                    "%d session std entries below floor %.3g; clamping",
                    int((raw_std < self.std_floor).sum()), self.std_floor,
                )
            self.std_ = np.maximum(raw_std, self.std_floor)
        else:
            raise ContractError(f"unknown SessionScaler mode '{self.mode}'")
        return self

    @staticmethod
    def _as_list(X):
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return [X]
        return list(X)

    def transform(self, X) -> FeatureMatrix:
        if not hasattr(self, "mean_"):
            raise NotFittedError("SessionScaler is not fitted")
        arr = X.data if isinstance(X, FeatureMatrix) else as_float_matrix(X, "posteriors")
        return FeatureMatrix(data=(arr - self.mean_) / self.std_, kind="posterior61")


def session_normalize(posteriors: np.ndarray, mean: float, std: float) -> FeatureMatrix:
    """Functional form of the scalar session normalization."""
    arr = as_float_matrix(posteriors, "posteriors")
    if std <= 0:
        raise ContractError("session std must be positive")
    return FeatureMatrix(data=(arr - mean) / std, kind="posterior61")


def onehot_encode(
    align: Sequence[AlignmentSegment],
    inventory: PhoneInventory,
    frame_rate_hz: float,
    n_frames: int,
    silence_labels: Iterable[str] = DEFAULT_SILENCE_LABELS,
) -> FeatureMatrix:
    """One-hot rows by frame-midpoint label; silence and uncovered frames
    yield all-zero rows (removed downstream by silence removal)."""
    if n_frames < 1:
        raise ContractError("n_frames must be at least 1")
    silence = set(silence_labels)
    data = np.zeros((n_frames, len(inventory)))
    for t in range(n_frames):
        label = label_at_time(align, frame_midpoint_s(t, frame_rate_hz))
        if label is None or label in silence:
            continue
        if label not in inventory:
            raise ContractError(f"label '{label}' not in inventory")
        data[t, inventory.index[label]] = 1.0
    return FeatureMatrix(data=data, kind="onehot")
