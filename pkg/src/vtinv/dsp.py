"""MFCC front-end producing 39-dimensional features frame-synchronous with
the 50 Hz contour rate.

Window 25 ms, hop 20 ms (locking one feature frame to one contour frame),
26 mel filters, orthonormal DCT-II, coefficients c0..c12 kept, then delta
and delta-delta appended. Frames are centered at (t + 0.5) * hop with zero
padding so the row count always equals the requested frame count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import ContractError
from .validation import as_float_matrix, check_finite

FEATURE_KINDS = ("mfcc39", "posterior61", "onehot")


@dataclass(frozen=True)
class MfccConfig:
    sample_rate_hz: int = 16000
    window_s: float = 0.025
    hop_s: float = 0.020
    fft_size: int = 512
    n_mel_filters: int = 26
    n_ceps: int = 13
    preemphasis: float = 0.97
    mel_fmin_hz: float = 0.0
    mel_fmax_hz: float = 8000.0
    log_floor: float = 1e-10

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.sample_rate_hz))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_s * self.sample_rate_hz))

    def validate(self) -> None:
        if self.mel_fmax_hz > self.sample_rate_hz / 2:
            raise ContractError(
                f"mel_fmax_hz {self.mel_fmax_hz} exceeds Nyquist "
                f"{self.sample_rate_hz / 2}"
            )
        if self.fft_size < self.window_samples:
            raise ContractError("fft_size must cover the analysis window")
        if self.n_ceps > self.n_mel_filters:
            raise ContractError("n_ceps cannot exceed n_mel_filters")


@dataclass(frozen=True)
class FeatureMatrix:
    """Frame-synchronous input features with a kind tag."""

    data: np.ndarray  # (T, D) float64
    kind: str

    def __post_init__(self):
        arr = as_float_matrix(self.data, "FeatureMatrix.data")
        check_finite(arr, "FeatureMatrix.data")
        if self.kind not in FEATURE_KINDS:
            raise ContractError(f"unknown feature kind '{self.kind}'")
        object.__setattr__(self, "data", arr)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def replace_data(self, data: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(data=data, kind=self.kind)


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers_hz(cfg: MfccConfig) -> np.ndarray:
    """Center frequencies of the triangular filters, equally spaced in mel."""
    edges = np.linspace(
        hz_to_mel(cfg.mel_fmin_hz), hz_to_mel(cfg.mel_fmax_hz), cfg.n_mel_filters + 2
    )
    return mel_to_hz(edges[1:-1])


def build_mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """(n_mel, fft_size/2 + 1) triangular filters, each peaking at 1."""
    cfg.validate()
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate_hz / cfg.fft_size
    edges_mel = np.linspace(
        hz_to_mel(cfg.mel_fmin_hz), hz_to_mel(cfg.mel_fmax_hz), cfg.n_mel_filters + 2
    )
    edges_hz = mel_to_hz(edges_mel)
    bank = np.zeros((cfg.n_mel_filters, n_bins))
    for m in range(cfg.n_mel_filters):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def dct_ii_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k dotted with a length-n vector gives
    coefficient k."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    mat[0] /= np.sqrt(2.0)
    return mat


def extract_mfcc(audio: np.ndarray, cfg: MfccConfig, n_frames: int) -> FeatureMatrix:
    """MFCCs (c0..c12) for exactly n_frames frames centered on the contour
    frame grid. Audio is zero padded at both ends as needed."""
    cfg.validate()
    audio = np.asarray(audio, dtype=np.float64).ravel()
    if audio.size == 0:
        raise ContractError("extract_mfcc requires non-empty audio")
    if n_frames < 1:
        raise ContractError("n_frames must be at least 1")

    # pre-emphasis over the raw signal, first sample passed through
    emphasized = np.empty_like(audio)
    emphasized[0] = audio[0]
    emphasized[1:] = audio[1:] - cfg.preemphasis * audio[:-1]

    win = cfg.window_samples
    hop = cfg.hop_samples
    half = win // 2
    centers = (np.arange(n_frames) + 0.5) * hop
    starts = np.round(centers).astype(int) - half
    pad_left = max(0, -starts.min())
    pad_right = max(0, starts.max() + win - len(emphasized))
    padded = np.pad(emphasized, (pad_left, pad_right))
    idx = (starts + pad_left)[:, None] + np.arange(win)[None, :]
    frames = padded[idx] * np.hamming(win)

    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    mel_energy = power @ build_mel_filterbank(cfg).T
    log_mel = np.log(np.maximum(mel_energy, cfg.log_floor))
    dct = dct_ii_matrix(cfg.n_mel_filters)
    ceps = log_mel @ dct[: cfg.n_ceps].T
    return FeatureMatrix(data=ceps, kind="mfcc39")


def add_deltas(base: FeatureMatrix) -> FeatureMatrix:
    """Append delta and delta-delta columns (regression window N=2 with edge
    replication); a (T, 13) input becomes (T, 39)."""
    c = base.data if isinstance(base, FeatureMatrix) else as_float_matrix(base)
    deltas = _delta(c)
    ddeltas = _delta(deltas)
    kind = base.kind if isinstance(base, FeatureMatrix) else "mfcc39"
    return FeatureMatrix(data=np.hstack([c, deltas, ddeltas]), kind=kind)


def _delta(c: np.ndarray, n_window: int = 2) -> np.ndarray:
    T = c.shape[0]
    pad = np.pad(c, ((n_window, n_window), (0, 0)), mode="edge")
    num = np.zeros_like(c)
    for n in range(1, n_window + 1):
        num += n * (pad[n_window + n:n_window + n + T] - pad[n_window - n:n_window - n + T])
    denom = 2.0 * sum(n * n for n in range(1, n_window + 1))
    return num / denom


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Per-column z-scoring of frame features; fit on the training split."""

    def __init__(self, std_floor: float = 1e-8):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        stacked = self._stack(X)
        if stacked.shape[0] == 0:
            raise ContractError("FeatureScaler.fit requires at least one frame")
        self.mean_ = stacked.mean(axis=0)
        self.std_ = np.maximum(stacked.std(axis=0), self.std_floor)
        return self

    @staticmethod
    def _stack(X) -> np.ndarray:
        if isinstance(X, FeatureMatrix):
            return X.data
        if isinstance(X, np.ndarray):
            return as_float_matrix(X)
        return np.concatenate(
            [x.data if isinstance(x, FeatureMatrix) else as_float_matrix(x) for x in X],
            axis=0,
        )

    def transform(self, X):
        if not hasattr(self, "mean_"):
            raise NotFittedError("FeatureScaler is not fitted")
        if isinstance(X, FeatureMatrix):
            return X.replace_data(self._apply(X.data))
        if isinstance(X, np.ndarray):
            return self._apply(as_float_matrix(X))
        return [self.transform(x) for x in X]

    def _apply(self, data: np.ndarray) -> np.ndarray:
        if data.shape[1] != self.mean_.shape[0]:
            raise ContractError(
                f"feature dimension {data.shape[1]} does not match fitted "
                f"dimension {self.mean_.shape[0]}"
            )
        return (data - self.mean_) / self.std_
