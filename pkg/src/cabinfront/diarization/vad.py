"""Frame-energy voice activity detection with hangover smoothing."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.ndimage import minimum_filter1d

from .. import kernels
from ..dsp import AudioBuffer


@dataclass(frozen=True)
class VadConfig:
    frame: float = 0.02  # seconds
    energy_threshold_db: float = 12.0  # above the rolling noise floor
    hangover: int = 5  # frames kept after energy drops
    min_speech: float = 0.1
    min_silence: float = 0.2
    noise_window: float = 5.0  # seconds, rolling-minimum span for the floor
    absolute_floor_db: float = -90.0  # frames quieter than this are never speech

    def __post_init__(self):
        if self.frame <= 0:
            raise ValueError("frame must be positive")
        if self.hangover < 0:
            raise ValueError("hangover must be >= 0")


def frame_energy_db(x: np.ndarray, frame_len: int) -> np.ndarray:
    n = int(math.ceil(x.size / frame_len))
    padded = np.zeros(n * frame_len)
    padded[: x.size] = x
    counts = np.full(n, frame_len, dtype=float)
    if n:
        counts[-1] = x.size - (n - 1) * frame_len
    energy = np.sum(padded.reshape(n, frame_len) ** 2, axis=1) / counts
    return 10.0 * np.log10(energy + 1e-12)


def _runs(active: np.ndarray) -> List[Tuple[int, int]]:
    """[start, stop) index pairs of True runs."""
    if active.size == 0:
        return []
    d = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    return list(zip(np.nonzero(d == 1)[0].tolist(), np.nonzero(d == -1)[0].tolist()))


def energy_vad(audio: AudioBuffer, cfg: VadConfig = VadConfig()) -> List[Tuple[float, float]]:
    """Speech regions as sorted, disjoint ``(onset, duration)`` pairs in seconds."""
    x = audio.samples.mean(axis=0)
    if x.size == 0:
        return []
    fs = audio.sample_rate
    frame_len = max(1, int(round(cfg.frame * fs)))
    e = frame_energy_db(x, frame_len)
    span = max(1, int(round(cfg.noise_window / cfg.frame)))
    floor = minimum_filter1d(e, size=span, mode="nearest")
    active = (e > floor + cfg.energy_threshold_db) & (e > cfg.absolute_floor_db)
    active = np.asarray(kernels.hangover(active, int(cfg.hangover)), dtype=bool)

    frame_s = frame_len / fs
    runs = _runs(active)
    merged: List[List[int]] = []
    min_gap = cfg.min_silence / frame_s
    for s, t in runs:
        if merged and s - merged[-1][1] < min_gap - 1e-9:
            merged[-1][1] = t
        else:
            merged.append([s, t])
    duration = x.size / fs
    regions = []
    for s, t in merged:
        if (t - s) * frame_s < cfg.min_speech - 1e-9:
            continue
        on = s * frame_s
        off = min(t * frame_s, duration)
        regions.append((on, off - on))
    return regions
