"""Deterministic signal primitives shared by every pipeline stage."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.signal import get_window

from . import kernels
from .errors import ConfigError, DataError

__all__ = [
    "AudioBuffer",
    "StftConfig",
    "Spectrogram",
    "SiSdrBreakdown",
    "SpecAugmentPolicy",
    "stft",
    "istft",
    "si_sdr",
    "scaled_noise",
    "mix_at_snr",
    "speed_perturb",
    "spec_augment_masks",
    "spectral_flatness",
    "is_music_like",
    "power",
]


@dataclass
class AudioBuffer:
    """Multi-channel waveform, shape ``(channels, num_samples)``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DataError(f"audio must be (channels, samples), got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("audio contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        self.samples = x
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> "AudioBuffer":
        return AudioBuffer(self.samples[index : index + 1].copy(), self.sample_rate)

    def slice(self, start: int, stop: int) -> "AudioBuffer":
        return AudioBuffer(self.samples[:, start:stop].copy(), self.sample_rate)

    def mono(self) -> np.ndarray:
        if self.channels != 1:
            raise DataError(f"expected 1-channel audio, got {self.channels}")
        return self.samples[0]


def _as_signal(x) -> np.ndarray:
    if isinstance(x, AudioBuffer):
        return x.mono()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 1:
        raise DataError(f"expected a 1-channel signal, got shape {x.shape}")
    return x


def power(x) -> float:
    """Mean power over all channels and samples."""
    x = x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


# ---------------------------------------------------------------------------
# STFT


def _window(kind: str, length: int) -> np.ndarray:
    if kind == "hann":
        return get_window("hann", length, fftbins=True)
    if kind == "sqrt_hann":
        return np.sqrt(get_window("hann", length, fftbins=True))
    raise ConfigError(f"unknown window {kind!r}")


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 1024
    hop: int = 256
    fft_size: Optional[int] = None
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.fft_size is None:
            object.__setattr__(self, "fft_size", self.window_length)
        if not 0 < self.hop <= self.window_length <= self.fft_size:
            raise ConfigError(
                "need 0 < hop <= window_length <= fft_size, got "
                f"hop={self.hop} window_length={self.window_length} fft_size={self.fft_size}"
            )
        env = self.envelope_period()
        if env.min() <= 0 or env.max() - env.min() > 1e-9 * env.max():
            raise ConfigError(
                f"{self.window} window of length {self.window_length} with hop {self.hop} "
                "violates constant overlap-add"
            )

    @property
    def analysis_window(self) -> np.ndarray:
        return _window(self.window, self.window_length)

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def envelope_period(self) -> np.ndarray:
        """One period of the summed squared window (analysis x synthesis)."""
        w2 = self.analysis_window ** 2
        pad = (-len(w2)) % self.hop
        return np.concatenate([w2, np.zeros(pad)]).reshape(-1, self.hop).sum(axis=0)

    def num_frames(self, num_samples: int) -> int:
        return (num_samples - self.window_length) // self.hop + 1

    def padded_length(self, num_samples: int) -> int:
        """Smallest length >= num_samples that frames tile exactly."""
        if num_samples <= self.window_length:
            return self.window_length
        return self.window_length + math.ceil((num_samples - self.window_length) / self.hop) * self.hop


@dataclass
class Spectrogram:
    """Complex STFT, shape ``(channels, frames, bins)``."""

    data: np.ndarray
    config: StftConfig
    sample_rate: int

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def bins(self) -> int:
        return self.data.shape[2]

    def observations(self) -> np.ndarray:
        """Observation vectors x_{t,f} laid out ``(bins, frames, channels)``."""
        return np.ascontiguousarray(self.data.transpose(2, 1, 0))

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data, self.config, self.sample_rate)


def stft(audio: AudioBuffer, config: StftConfig = StftConfig()) -> Spectrogram:
    x = audio.samples
    if x.shape[1] < config.window_length:
        raise DataError(
            f"audio too short: {x.shape[1]} samples < window length {config.window_length}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, config.window_length, axis=-1)
    frames = frames[:, :: config.hop, :] * config.analysis_window
    data = np.fft.rfft(frames, n=config.fft_size, axis=-1)
    return Spectrogram(data, config, audio.sample_rate)


def istft(spec: Spectrogram) -> AudioBuffer:
    cfg = spec.config
    n_ch, n_frames, _ = spec.data.shape
    w = cfg.analysis_window
    length = (n_frames - 1) * cfg.hop + cfg.window_length
    frames = np.fft.irfft(spec.data, n=cfg.fft_size, axis=-1)[..., : cfg.window_length] * w
    out = np.zeros((n_ch, length))
    env = np.zeros(length)
    w2 = w * w
    for t in range(n_frames):
        s = t * cfg.hop
        out[:, s : s + cfg.window_length] += frames[:, t]
        env[s : s + cfg.window_length] += w2
    nz = env > 1e-10 * env.max() if length else env > 0
    out[:, nz] /= env[nz]
    out[:, ~nz] = 0.0
    return AudioBuffer(out, spec.sample_rate)


# ---------------------------------------------------------------------------
# SI-SDR


@dataclass(frozen=True)
class SiSdrBreakdown:
    alpha: float
    value_db: float


def si_sdr(reference, estimate) -> SiSdrBreakdown:
    """Scale-invariant SDR of ``estimate`` against ``reference``.

    Returns ``+inf`` when the estimate is an exact scaled copy and ``-inf``
    when it is orthogonal to the reference.
    """
    s = _as_signal(reference)
    e = _as_signal(estimate)
    if s.shape != e.shape:
        raise DataError(f"length mismatch: reference {s.size}, estimate {e.size}")
    ss = float(np.dot(s, s))
    if ss == 0.0:
        raise DataError("reference is all-zero")
    alpha = float(np.dot(e, s)) / ss
    target = alpha * s
    resid = target - e
    num = float(np.dot(target, target))
    den = float(np.dot(resid, resid))
    if den == 0.0:
        return SiSdrBreakdown(alpha, math.inf)
    if num == 0.0:
        return SiSdrBreakdown(alpha, -math.inf)
    return SiSdrBreakdown(alpha, 10.0 * math.log10(num / den))


# ---------------------------------------------------------------------------
# noise mixing


def _noise_segment(noise: np.ndarray, length: int, offset: int, loop: bool) -> np.ndarray:
    n = noise.shape[1]
    if n >= length:
        return noise[:, offset : offset + length]
    if not loop:
        raise DataError(f"noise ({n} samples) shorter than clean ({length} samples)")
    reps = math.ceil((length + offset) / n) + 1
    return np.tile(noise, (1, reps))[:, offset : offset + length]


def scaled_noise(
    clean: AudioBuffer,
    noise: AudioBuffer,
    snr_db: float,
    rng_offset: bool = False,
    rng: Optional[np.random.Generator] = None,
    loop: bool = False,
) -> np.ndarray:
    """The noise term ``g * noise_segment`` that puts ``clean`` at ``snr_db``."""
    if clean.sample_rate != noise.sample_rate:
        raise DataError(f"sample rate mismatch: {clean.sample_rate} vs {noise.sample_rate}")
    if clean.channels != noise.channels:
        raise DataError(f"channel mismatch: {clean.channels} vs {noise.channels}")
    length = clean.num_samples
    offset = 0
    if rng_offset:
        rng = rng if rng is not None else np.random.default_rng()
        span = noise.num_samples - length if noise.num_samples >= length else noise.num_samples
        offset = int(rng.integers(0, span + 1)) if span > 0 else 0
    seg = _noise_segment(noise.samples, length, offset, loop)
    p_clean = power(clean)
    p_noise = power(seg)
    if p_clean == 0.0:
        raise DataError("clean signal is silent")
    if p_noise == 0.0:
        raise DataError("noise segment is silent")
    gain = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return gain * seg


def mix_at_snr(
    clean: AudioBuffer,
    noise: AudioBuffer,
    snr_db: float,
    rng_offset: bool = False,
    rng: Optional[np.random.Generator] = None,
    loop: bool = False,
) -> AudioBuffer:
    n = scaled_noise(clean, noise, snr_db, rng_offset=rng_offset, rng=rng, loop=loop)
    return AudioBuffer(clean.samples + n, clean.sample_rate)


# ---------------------------------------------------------------------------
# speed perturbation

RESAMPLER_TAPS = 64


def speed_perturb(audio: AudioBuffer, factor: float) -> AudioBuffer:
    """Resample so playback is ``factor`` times faster (tempo and pitch)."""
    if not 0.5 <= factor <= 2.0:
        raise DataError(f"speed factor {factor} outside [0.5, 2.0]")
    if factor == 1.0:
        return AudioBuffer(audio.samples.copy(), audio.sample_rate)
    out_len = int(round(audio.num_samples / factor))
    out = np.stack(
        [
            kernels.sinc_resample(np.ascontiguousarray(ch), float(factor), out_len, RESAMPLER_TAPS // 2)
            for ch in audio.samples
        ]
    )
    return AudioBuffer(out, audio.sample_rate)


# ---------------------------------------------------------------------------
# SpecAugment


@dataclass(frozen=True)
class SpecAugmentPolicy:
    num_time_masks: int = 2
    max_time_width: int = 10
    num_freq_masks: int = 2
    max_freq_width: int = 8
    seed: int = 0


def spec_augment_masks(shape: Tuple[int, int], policy: SpecAugmentPolicy) -> np.ndarray:
    """Boolean keep-mask of shape (T, F); False marks masked cells."""
    n_t, n_f = shape
    if not (0 <= policy.max_time_width <= n_t and 0 <= policy.max_freq_width <= n_f):
        raise ConfigError(f"policy widths do not fit shape {shape}")
    mask = np.ones((n_t, n_f), dtype=bool)
    rng = np.random.default_rng(policy.seed)
    for _ in range(policy.num_time_masks):
        w = int(rng.integers(0, policy.max_time_width + 1))
        s = int(rng.integers(0, n_t - w + 1))
        mask[s : s + w, :] = False
    for _ in range(policy.num_freq_masks):
        w = int(rng.integers(0, policy.max_freq_width + 1))
        s = int(rng.integers(0, n_f - w + 1))
        mask[:, s : s + w] = False
    return mask


# ---------------------------------------------------------------------------
# spectral flatness and the music heuristic

_SILENCE_POWER = 1e-20


def spectral_flatness(audio: AudioBuffer, frame: int = 512) -> np.ndarray:
    """Per-frame Wiener entropy of the (channel-averaged) power spectrum.

    Frames are non-overlapping and Hann-windowed. Silent frames are
    assigned flatness 1.0.
    """
    if frame < 64:
        raise ConfigError(f"frame must be >= 64 samples, got {frame}")
    x = audio.samples.mean(axis=0)
    n_frames = x.size // frame
    if n_frames == 0:
        return np.zeros(0)
    frames = x[: n_frames * frame].reshape(n_frames, frame) * get_window("hann", frame)
    p = np.abs(np.fft.rfft(frames, axis=-1)) ** 2
    arith = p.mean(axis=-1)
    out = np.ones(n_frames)
    live = arith > _SILENCE_POWER
    if np.any(live):
        geo = np.exp(np.mean(np.log(np.maximum(p[live], 1e-300)), axis=-1))
        out[live] = np.clip(geo / arith[live], 0.0, 1.0)
    return out


def is_music_like(
    audio: AudioBuffer,
    frame: int = 512,
    flatness_band: Tuple[float, float] = (0.2, 0.6),
    energy_threshold_db: float = -30.0,
) -> bool:
    """Stand-in music detector: tonal-but-broadband and loud."""
    flat = spectral_flatness(audio, frame)
    if flat.size == 0:
        return False
    level = 10.0 * math.log10(max(power(audio), 1e-30))
    lo, hi = flatness_band
    return bool(lo <= flat.mean() <= hi and level > energy_threshold_db)
