import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cabinfront.dsp import (
    RESAMPLER_TAPS,
    AudioBuffer,
    SpecAugmentPolicy,
    StftConfig,
    is_music_like,
    istft,
    mix_at_snr,
    power,
    si_sdr,
    spec_augment_masks,
    spectral_flatness,
    speed_perturb,
    stft,
)
from cabinfront.errors import ConfigError, DataError

from .conftest import FS, mono

COLA_CONFIGS = [
    StftConfig(1024, 256),
    StftConfig(512, 128, 1024),
    StftConfig(400, 100, 512, "hann"),
]


# -- oracles ---------------------------------------------------------------


def dft_frame(frame, n_fft):
    """Direct O(N^2) DFT of one frame, first n_fft/2+1 bins."""
    n = np.arange(frame.size)
    k = np.arange(n_fft // 2 + 1)[:, None]
    return (frame[None, :] * np.exp(-2j * np.pi * k * n / n_fft)).sum(axis=1)


def si_sdr_oracle(s, e):
    s = [float(v) for v in s]
    e = [float(v) for v in e]
    alpha = math.fsum(a * b for a, b in zip(e, s)) / math.fsum(a * a for a in s)
    num = math.fsum((alpha * a) ** 2 for a in s)
    den = math.fsum((alpha * a - b) ** 2 for a, b in zip(s, e))
    return 10 * math.log10(num / den)


# -- AudioBuffer -----------------------------------------------------------


def test_audio_buffer_invariants():
    with pytest.raises(DataError):
        AudioBuffer(np.zeros((1, 10)), 0)
    with pytest.raises(DataError):
        AudioBuffer(np.array([[0.0, np.nan]]), FS)
    with pytest.raises(DataError):
        AudioBuffer(np.zeros((0, 10)), FS)
    a = AudioBuffer(np.zeros(5), FS)  # 1-D promoted to one channel
    assert a.channels == 1 and a.num_samples == 5


# -- STFT ------------------------------------------------------------------


def test_stft_frame_count_and_bins():
    cfg = StftConfig(512, 128, 1024)
    spec = stft(mono(np.zeros(3000)), cfg)
    assert spec.frames == (3000 - 512) // 128 + 1
    assert spec.bins == 513
    assert not np.any(spec.data)


def test_stft_matches_direct_dft():
    cfg = StftConfig(256, 64)
    k = 17
    t = np.arange(2048)
    x = np.cos(2 * np.pi * k * t / cfg.fft_size + 0.3)
    spec = stft(mono(x), cfg)
    mag = np.abs(spec.data[0])
    assert np.all(np.argmax(mag, axis=1) == k)
    for frame in (0, 5, spec.frames - 1):
        seg = x[frame * cfg.hop : frame * cfg.hop + cfg.window_length] * cfg.analysis_window
        np.testing.assert_allclose(spec.data[0, frame], dft_frame(seg, cfg.fft_size), atol=1e-9)


def test_stft_linear(rng):
    cfg = StftConfig(512, 128)
    a, b = rng.normal(size=(2, 1, 4000))
    lhs = stft(AudioBuffer(a + b, FS), cfg).data
    rhs = stft(AudioBuffer(a, FS), cfg).data + stft(AudioBuffer(b, FS), cfg).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_stft_too_short():
    with pytest.raises(DataError, match="too short"):
        stft(mono(np.zeros(100)), StftConfig(256, 64))


def test_non_cola_rejected_at_construction():
    with pytest.raises(ConfigError, match="overlap-add"):
        StftConfig(512, 200)
    with pytest.raises(ConfigError):
        StftConfig(512, 600)


@pytest.mark.parametrize("cfg", COLA_CONFIGS, ids=lambda c: f"{c.window}-{c.window_length}-{c.hop}")
def test_round_trip_interior(cfg, rng):
    x = rng.normal(size=(2, 6000))
    y = istft(stft(AudioBuffer(x, FS), cfg)).samples
    assert y.shape[1] == (stft(AudioBuffer(x, FS), cfg).frames - 1) * cfg.hop + cfg.window_length
    lo, hi = cfg.window_length, y.shape[1] - cfg.window_length
    assert np.max(np.abs(y[:, lo:hi] - x[:, lo:hi])) <= 1e-6


def test_istft_zero_and_locality():
    cfg = StftConfig(256, 64)
    spec = stft(mono(np.zeros(2000)), cfg)
    assert not np.any(istft(spec).samples)
    data = spec.data.copy()
    data[0, 10, 5] = 1.0
    y = istft(spec.with_data(data)).samples[0]
    support = np.nonzero(np.abs(y) > 0)[0]
    assert support.min() >= 10 * cfg.hop and support.max() < 10 * cfg.hop + cfg.window_length


# -- SI-SDR ----------------------------------------------------------------


def test_si_sdr_trivial_cases(rng):
    s = rng.normal(size=1000)
    assert si_sdr(s, 2 * s).value_db == math.inf
    # disjoint supports give an exactly zero inner product
    ref, est = np.zeros(1000), np.zeros(1000)
    ref[1::2], est[::2] = 1.0, 1.0
    res = si_sdr(ref, est)
    assert res.alpha == 0 and res.value_db == -math.inf


def test_si_sdr_matches_oracle(rng):
    for _ in range(50):
        s, e = rng.normal(size=(2, 1000))
        e = 0.7 * s + e
        assert abs(si_sdr(s, e).value_db - si_sdr_oracle(s, e)) <= 1e-6


def test_si_sdr_errors():
    with pytest.raises(DataError):
        si_sdr(np.zeros(10), np.ones(10))
    with pytest.raises(DataError):
        si_sdr(np.ones(10), np.ones(11))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(1e-3, 1e3))
def test_si_sdr_scale_invariant(seed, c):
    r = np.random.default_rng(seed)
    s, e = r.normal(size=(2, 256))
    assert abs(si_sdr(s, e).value_db - si_sdr(s, c * e).value_db) <= 1e-9


# -- mixing ----------------------------------------------------------------


def test_mix_equal_power_zero_db_is_unit_gain(rng):
    clean = rng.normal(size=(1, 800))
    noise = rng.normal(size=(1, 800))
    noise *= np.sqrt(power(clean) / power(noise))
    out = mix_at_snr(AudioBuffer(clean, FS), AudioBuffer(noise, FS), 0.0)
    np.testing.assert_allclose(out.samples, clean + noise, rtol=0, atol=1e-12)


@pytest.mark.parametrize("snr", [-5.0, 0.0, 7.0, 20.0])
def test_mix_hits_snr(snr, rng):
    clean = AudioBuffer(rng.normal(size=(2, 3000)), FS)
    noise = AudioBuffer(rng.normal(size=(2, 5000)) * 3, FS)
    out = mix_at_snr(clean, noise, snr, rng_offset=True, rng=rng)
    n = out.samples - clean.samples
    assert abs(10 * np.log10(power(clean) / power(n)) - snr) <= 0.01


def test_mix_errors(rng):
    clean = AudioBuffer(rng.normal(size=(1, 100)), FS)
    with pytest.raises(DataError, match="silent"):
        mix_at_snr(clean, AudioBuffer(np.zeros((1, 100)), FS), 5)
    with pytest.raises(DataError, match="silent"):
        mix_at_snr(AudioBuffer(np.zeros((1, 100)), FS), clean, 5)
    with pytest.raises(DataError, match="shorter"):
        mix_at_snr(clean, AudioBuffer(rng.normal(size=(1, 50)), FS), 5)
    looped = mix_at_snr(clean, AudioBuffer(rng.normal(size=(1, 50)), FS), 5, loop=True)
    assert looped.num_samples == 100
    with pytest.raises(DataError, match="sample rate"):
        mix_at_snr(clean, AudioBuffer(rng.normal(size=(1, 100)), 8000), 5)


# -- speed perturbation ----------------------------------------------------


def test_speed_identity_is_bit_exact(rng):
    x = AudioBuffer(rng.normal(size=(1, 1000)), FS)
    y = speed_perturb(x, 1.0)
    assert np.array_equal(x.samples, y.samples) and y.samples is not x.samples


def test_speed_length_formula(rng):
    x = AudioBuffer(rng.normal(size=(1, 16000)), FS)
    assert abs(speed_perturb(x, 1.1).num_samples - 14545) <= 1
    for f in (0.5, 0.9, 1.3, 2.0):
        assert abs(speed_perturb(x, f).num_samples - 16000 / f) <= 1
    with pytest.raises(DataError):
        speed_perturb(x, 2.5)


def test_speed_shifts_tone_frequency():
    t = np.arange(32000) / FS
    y = speed_perturb(mono(np.sin(2 * np.pi * 1000 * t)), 1.1).samples[0]
    spec = np.abs(np.fft.rfft(y[2000:-2000] * np.hanning(y.size - 4000)))
    peak = np.argmax(spec) * FS / (y.size - 4000)
    assert abs(peak - 1100) < 5
    assert RESAMPLER_TAPS == 64


# -- SpecAugment -----------------------------------------------------------


def test_spec_augment_degenerate_and_deterministic():
    assert spec_augment_masks((50, 40), SpecAugmentPolicy(0, 10, 0, 8)).all()
    p = SpecAugmentPolicy(seed=7)
    assert np.array_equal(spec_augment_masks((100, 80), p), spec_augment_masks((100, 80), p))
    with pytest.raises(ConfigError):
        spec_augment_masks((5, 80), SpecAugmentPolicy(max_time_width=10))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_spec_augment_band_budget(seed):
    m = spec_augment_masks((100, 80), SpecAugmentPolicy(2, 10, 2, 8, seed))
    rows = ~m.all(axis=1) & ~m.any(axis=1)  # fully masked time frames
    cols = ~m.any(axis=0)
    assert rows.sum() <= 20 and cols.sum() <= 16
    # any masked cell lies in a masked row or a masked column
    assert np.all(m | rows[:, None] | cols[None, :])


# -- flatness --------------------------------------------------------------


def test_flatness_white_tone_silence():
    white = [spectral_flatness(mono(np.random.default_rng(s).normal(size=8192))).mean() for s in range(50)]
    assert min(white) > 0.5
    t = np.arange(8192) / FS
    tones = [spectral_flatness(mono(np.sin(2 * np.pi * (300 + 37 * s) * t))).mean() for s in range(50)]
    assert max(tones) < 0.1
    assert np.all(spectral_flatness(mono(np.zeros(4096))) == 1.0)
    with pytest.raises(ConfigError):
        spectral_flatness(mono(np.zeros(4096)), frame=32)


def test_music_heuristic(rng):
    t = np.arange(16000) / FS
    assert not is_music_like(mono(np.zeros(16000)))
    assert not is_music_like(mono(0.005 * rng.normal(size=16000)))  # below the energy gate
    assert not is_music_like(mono(0.5 * np.sin(2 * np.pi * 440 * t)))  # too tonal
    chord = sum(np.sin(2 * np.pi * f * t) for f in (220, 277, 330, 440, 554, 660)) * 0.05
    chord = chord + 0.1 * rng.normal(size=t.size)  # tonal peaks over a broadband bed
    assert is_music_like(mono(chord))
