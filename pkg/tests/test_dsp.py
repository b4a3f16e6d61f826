import math

import numpy as np
import pytest

from vtinv._rng import Xoshiro256pp
from vtinv.dsp import (
    FeatureMatrix,
    FeatureScaler,
    MfccConfig,
    add_deltas,
    build_mel_filterbank,
    dct_ii_matrix,
    extract_mfcc,
    hz_to_mel,
    mel_filter_centers_hz,
)
from vtinv.errors import ContractError

CFG = MfccConfig()


def tone(freq_hz: float, n_samples: int, amplitude: float = 0.8) -> np.ndarray:
    t = np.arange(n_samples) / CFG.sample_rate_hz
    return amplitude * np.sin(2 * np.pi * freq_hz * t)


# ---------------------------------------------------------------------------
# mel scale and filterbank

def test_mel_formula_at_1khz():
    # direct evaluation: 2595 * log10(1 + 1000/700)
    expected = 2595.0 * math.log10(1.0 + 1000.0 / 700.0)
    assert abs(expected - 999.9855) < 1e-3
    assert hz_to_mel(1000.0) == pytest.approx(expected, abs=1e-12)


def test_filterbank_rows_unimodal_peak_one():
    bank = build_mel_filterbank(CFG)
    assert bank.shape == (26, 257)
    for row in bank:
        assert row.min() >= 0.0
        assert row.max() == pytest.approx(1.0, abs=0.2)  # peak near 1 (grid-sampled triangle)
        peak = int(np.argmax(row))
        left = row[: peak + 1]
        right = row[peak:]
        assert np.all(np.diff(left[left > 0]) >= -1e-12) or peak == 0
        assert np.all(np.diff(right[right > 0]) <= 1e-12)


def test_filterbank_centers_increasing():
    centers = mel_filter_centers_hz(CFG)
    assert centers.shape == (26,)
    assert np.all(np.diff(centers) > 0)


def test_filterbank_fmax_above_nyquist_rejected():
    with pytest.raises(ContractError, match="Nyquist"):
        build_mel_filterbank(MfccConfig(mel_fmax_hz=9000.0))


# ---------------------------------------------------------------------------
# MFCC extraction

def test_zero_audio_constant_frames():
    feats = extract_mfcc(np.zeros(16000), CFG, 40)
    assert feats.data.shape == (40, 13)
    assert np.all(feats.data == feats.data[0])  # exact: every mel energy floored


def test_sine_peaks_at_nearest_filter():
    audio = tone(1000.0, 16000)
    centers = mel_filter_centers_hz(CFG)
    expected_filter = int(np.argmin(np.abs(centers - 1000.0)))

    cfg = CFG
    emphasized = np.empty_like(audio)
    emphasized[0] = audio[0]
    emphasized[1:] = audio[1:] - cfg.preemphasis * audio[:-1]
    bank = build_mel_filterbank(cfg)
    # check interior frames directly on the mel energies
    for t in range(5, 40):
        start = 160 + 320 * t - 200
        frame = emphasized[start:start + 400] * np.hamming(400)
        spec = np.abs(np.fft.rfft(frame, 512)) ** 2
        energies = bank @ spec
        assert int(np.argmax(energies)) == expected_filter


def test_amplitude_doubling_shifts_only_c0():
    rng = Xoshiro256pp(4)
    audio = rng.uniform_matrix(-0.4, 0.4, (16000,))
    base = extract_mfcc(audio, CFG, 40).data
    loud = extract_mfcc(2.0 * audio, CFG, 40).data
    # power scales by 4 -> log-mel shifts by log 4 -> only DCT coefficient 0 moves
    c0_shift = math.log(4.0) * math.sqrt(CFG.n_mel_filters)
    assert np.allclose(loud[:, 0] - base[:, 0], c0_shift, atol=1e-8)
    assert np.allclose(loud[:, 1:], base[:, 1:], atol=1e-8)


def test_row_count_matches_request_for_any_length():
    for n_samples in (1, 3, 319, 12800, 38401):
        feats = extract_mfcc(np.ones(n_samples) * 0.1, CFG, 17)
        assert feats.data.shape == (17, 13)


def test_empty_audio_rejected():
    with pytest.raises(ContractError, match="non-empty"):
        extract_mfcc(np.array([]), CFG, 5)


def test_time_shift_by_one_hop_shifts_rows():
    rng = Xoshiro256pp(8)
    audio = rng.uniform_matrix(-0.5, 0.5, (16000,))
    full = extract_mfcc(audio, CFG, 48).data
    shifted = extract_mfcc(audio[320:], CFG, 47).data
    assert np.max(np.abs(shifted[2:45] - full[3:46])) < 1e-6


# ---------------------------------------------------------------------------
# deltas

def make_fm(data):
    return FeatureMatrix(data=data, kind="mfcc39")


def test_delta_of_constant_is_zero():
    feats = add_deltas(make_fm(np.full((12, 13), 3.25)))
    assert feats.data.shape == (12, 39)
    assert np.all(feats.data[:, 13:] == 0.0)


def test_delta_of_ramp_interior():
    ramp = np.tile(np.arange(20.0)[:, None], (1, 13))
    feats = add_deltas(make_fm(ramp)).data
    # regression window N=2: interior delta exactly 1, delta-delta exactly 0
    assert np.allclose(feats[2:-2, 13:26], 1.0, atol=1e-12)
    assert np.allclose(feats[4:-4, 26:], 0.0, atol=1e-12)


def test_delta_single_frame_zero():
    feats = add_deltas(make_fm(np.ones((1, 13)))).data
    assert np.all(feats[:, 13:] == 0.0)


def test_deltas_linear():
    rng = Xoshiro256pp(6)
    a = rng.uniform_matrix(-1, 1, (15, 13))
    b = rng.uniform_matrix(-1, 1, (15, 13))
    lhs = add_deltas(make_fm(2.0 * a + 0.5 * b)).data
    rhs = 2.0 * add_deltas(make_fm(a)).data + 0.5 * add_deltas(make_fm(b)).data
    assert np.max(np.abs(lhs - rhs)) < 1e-9


# ---------------------------------------------------------------------------
# DCT

def test_dct_orthonormal_roundtrip():
    rng = Xoshiro256pp(13)
    v = rng.uniform_matrix(-2, 2, (26,))
    M = dct_ii_matrix(26)
    assert np.max(np.abs(M.T @ (M @ v) - v)) < 1e-10
    assert np.max(np.abs(M @ M.T - np.eye(26))) < 1e-10


# ---------------------------------------------------------------------------
# feature scaling

def test_zscore_of_mean_is_zero():
    rng = Xoshiro256pp(2)
    X = rng.uniform_matrix(-3, 3, (50, 39))
    scaler = FeatureScaler().fit(X)
    z = scaler.transform(np.tile(scaler.mean_, (4, 1)))
    assert np.allclose(z, 0.0, atol=1e-12)


def test_zscore_identity_stats():
    scaler = FeatureScaler()
    scaler.mean_ = np.zeros(5)
    scaler.std_ = np.ones(5)
    X = np.arange(15.0).reshape(3, 5)
    assert np.array_equal(scaler.transform(X), X)


def test_zscore_self_standardization():
    rng = Xoshiro256pp(21)
    X = rng.uniform_matrix(-5, 5, (200, 7))
    z = FeatureScaler().fit(X).transform(X)
    assert np.max(np.abs(z.mean(axis=0))) < 1e-10
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-10)


def test_zscore_dimension_mismatch():
    scaler = FeatureScaler().fit(np.ones((4, 6)))
    with pytest.raises(ContractError, match="dimension"):
        scaler.transform(np.ones((4, 5)))
