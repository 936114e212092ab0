"""Built-in stationary-noise spectral gate, the fallback when no denoise hook is set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioBuffer, StftConfig, istft, stft


@dataclass(frozen=True)
class GateConfig:
    stft: StftConfig = StftConfig(512, 128)
    quantile: float = 0.1  # fraction of quietest frames per band forming the floor
    gain_floor: float = 0.1
    oversubtract: float = 1.0

    def __post_init__(self):
        if not 0 < self.quantile <= 1:
            raise ValueError("quantile must be in (0, 1]")
        if not 0 <= self.gain_floor <= 1:
            raise ValueError("gain_floor must be in [0, 1]")


def noise_floor(mag: np.ndarray, quantile: float) -> np.ndarray:
    """Per-band mean magnitude over the lowest-energy ``quantile`` of frames.

    ``mag`` is (T, F). Frames are ranked by total energy, so the estimate is
    a noise spectrum taken from the quietest stretch of the signal.
    """
    n = max(1, int(np.ceil(quantile * mag.shape[0])))
    energy = np.sum(mag * mag, axis=1)
    quiet = np.argsort(energy, kind="stable")[:n]
    return mag[quiet].mean(axis=0)


def spectral_gate_denoise(audio: AudioBuffer, config: GateConfig = GateConfig()) -> AudioBuffer:
    """Attenuate stationary noise in a mono signal.

    The gain ``max(1 - floor/|X|, gain_floor)`` never exceeds one, and the
    signal is zero-padded by a full window on both sides so the sqrt-Hann
    frame is tight over every sample; together that keeps the output energy
    at or below the input energy.
    """
    cfg = config.stft
    n = audio.num_samples
    if n == 0 or not np.any(audio.samples):
        return AudioBuffer(np.zeros_like(audio.samples), audio.sample_rate)
    pad = cfg.window_length
    x = np.zeros((audio.channels, cfg.padded_length(n + 2 * pad)))
    x[:, pad : pad + n] = audio.samples
    spec = stft(AudioBuffer(x, audio.sample_rate), cfg)
    data = spec.data.copy()
    for c in range(data.shape[0]):
        mag = np.abs(data[c])
        floor = config.oversubtract * noise_floor(mag, config.quantile)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(mag > 0, 1.0 - floor[None, :] / mag, 0.0)
        data[c] *= np.clip(gain, config.gain_floor, 1.0)
    out = istft(spec.with_data(data)).samples[:, pad : pad + n]
    return AudioBuffer(out, audio.sample_rate)
