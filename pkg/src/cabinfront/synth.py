"""Synthetic speech-like sources and cabin scenes for tests, demos and benchmarks.

The "speech" is a harmonic complex with a wandering pitch, a fixed
formant-ish spectral tilt and a syllabic on/off envelope. It is sparse in
time-frequency like real speech, which is what the separation methods rely on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .diarization.rttm import Segment
from .dsp import AudioBuffer, StftConfig, istft, stft
from .rir import RoomSpec, ScenePlacement, cabin_preset, room_rirs, simulate_images


def speech_like(
    rng: np.random.Generator,
    duration: float,
    sample_rate: int = 16000,
    active: Optional[Sequence[Tuple[float, float]]] = None,
    f0_range: Tuple[float, float] = (90.0, 260.0),
) -> np.ndarray:
    """Syllable-structured voiced/unvoiced signal, silent outside ``active``.

    Each syllable gets its own pitch glide and formant targets; roughly one
    in five syllables is an unvoiced (noise) burst.
    """
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    f0_base = rng.uniform(*f0_range)
    pos = int(rng.uniform(0.0, 0.05) * sample_rate)
    while pos < n:
        syl = int(rng.uniform(0.12, 0.3) * sample_rate)
        gap = int(rng.uniform(0.03, 0.12) * sample_rate)
        if rng.uniform() < 0.1:
            gap += int(rng.uniform(0.15, 0.35) * sample_rate)  # phrase pause
        m = min(syl, n - pos)
        if m > 16:
            out[pos : pos + m] = _syllable(rng, syl, sample_rate, f0_base)[:m]
        pos += syl + gap
    if active is not None:
        gate = np.zeros(n)
        for on, off in active:
            gate[int(round(on * sample_rate)) : int(round(off * sample_rate))] = 1.0
        out *= gate
    peak = np.max(np.abs(out))
    return out / peak * 0.3 if peak > 0 else out


_FORMANT_BW = (80.0, 120.0, 180.0)


def _syllable(rng, length, sample_rate, f0_base):
    t = np.arange(length) / sample_rate
    if rng.uniform() < 0.2:
        src = rng.standard_normal(length)
        formants = (rng.uniform(2500, 3500), rng.uniform(4000, 5500), rng.uniform(6000, 7000))
        bws = (600.0, 900.0, 1200.0)
        gain = 0.3
    else:
        f0 = f0_base * np.exp(np.linspace(np.log(rng.uniform(0.85, 1.15)), np.log(rng.uniform(0.8, 1.1)), length))
        phase = 2 * np.pi * np.cumsum(f0) / sample_rate + rng.uniform(0, 2 * np.pi)
        n_harm = int(0.45 * sample_rate / f0.max())
        h = np.arange(1, n_harm + 1)
        src = np.sum(np.sin(np.outer(phase, h)) / h, axis=1)
        f1 = np.linspace(rng.uniform(300, 800), rng.uniform(300, 800), length)
        f2 = np.linspace(rng.uniform(900, 2300), rng.uniform(900, 2300), length)
        f3 = np.full(length, rng.uniform(2400, 3200))
        formants = (f1, f2, f3)
        bws = _FORMANT_BW
        gain = 1.0
    # time-varying resonances applied framewise in the frequency domain
    frame = 256
    n_frames = int(np.ceil(length / frame))
    y = np.zeros(n_frames * frame)
    padded = np.zeros(n_frames * frame)
    padded[:length] = src
    freqs = np.fft.rfftfreq(frame * 2, 1.0 / sample_rate)
    win = np.hanning(frame * 2 + 1)[:-1]
    for i in range(-1, n_frames):
        s0 = i * frame
        seg = np.zeros(frame * 2)
        lo, hi = max(s0, 0), min(s0 + 2 * frame, len(padded))
        seg[lo - s0 : hi - s0] = padded[lo:hi]
        c = min(max(s0 + frame, 0), length - 1)
        env = sum(
            1.0 / (1.0 + ((freqs - (f[c] if np.ndim(f) else f)) / bw) ** 2) for f, bw in zip(formants, bws)
        )
        spec = np.fft.rfft(seg * win) * env
        outseg = np.fft.irfft(spec)
        lo2, hi2 = max(s0, 0), min(s0 + 2 * frame, len(y))
        y[lo2:hi2] += outseg[lo2 - s0 : hi2 - s0]
    y = y[:length] * np.hanning(length + 2)[1:-1] ** 0.5
    rms = np.sqrt(np.mean(y**2))
    return gain * y / rms if rms > 0 else y


def car_noise(
    rng: np.random.Generator,
    microphones: Sequence[Sequence[float]],
    samples: int,
    sample_rate: int = 16000,
    speed_of_sound: float = 343.0,
    corner_hz: float = 300.0,
) -> np.ndarray:
    """Spherically diffuse noise with a low-frequency-heavy spectrum.

    Inter-microphone coherence follows ``sinc(2 pi f d / c)``; the spectrum
    rolls off by 6 dB/octave above ``corner_hz`` (engine/road rumble).
    """
    cfg = StftConfig(512, 128)
    mics = np.asarray(microphones, dtype=float)
    length = cfg.padded_length(samples + 2 * cfg.window_length)
    white = stft(AudioBuffer(rng.standard_normal((len(mics), length)), sample_rate), cfg)
    freqs = np.fft.rfftfreq(cfg.fft_size, 1.0 / sample_rate)
    dist = np.linalg.norm(mics[:, None] - mics[None], axis=-1)
    coherence = np.sinc(2.0 * freqs[:, None, None] * dist[None] / speed_of_sound)
    val, vec = np.linalg.eigh(coherence)
    mix = vec * np.sqrt(np.maximum(val, 0.0))[:, None, :]
    shaped = np.einsum("fij,jtf->itf", mix, white.data) / np.sqrt(1.0 + (freqs / corner_hz) ** 2)
    out = istft(white.with_data(shaped)).samples
    return out[:, cfg.window_length : cfg.window_length + samples]


@dataclass
class SyntheticScene:
    mixture: AudioBuffer
    images: np.ndarray  # (sources, mics, samples) reverberant speech per source
    dry: List[np.ndarray]
    noise: np.ndarray  # (mics, samples)
    reference: List[Segment]
    room: RoomSpec
    placement: ScenePlacement


def cabin_scene(
    seed: int,
    activity: Sequence[Sequence[Tuple[float, float]]],
    duration: float,
    snr_db: float = 5.0,
    seats: Sequence[int] = (0, 1),
    room: Optional[RoomSpec] = None,
    recording_id: str = "rec",
    sample_rate: int = 16000,
) -> SyntheticScene:
    """Simulate one cabin recording with a speaker per entry of ``activity``.

    ``activity[i]`` lists (onset, end) speech intervals of speaker ``i``,
    which sits in seat ``seats[i]`` of the cabin preset.
    """
    rng = np.random.default_rng(seed)
    base_room, base_place = cabin_preset(sample_rate)
    room = room or base_room
    placement = ScenePlacement(tuple(base_place.sources[s] for s in seats[: len(activity)]), base_place.microphones)
    dry = [speech_like(rng, duration, sample_rate, act) for act in activity]
    images = simulate_images(room, placement, [AudioBuffer(d, sample_rate) for d in dry], room_rirs(room, placement))
    speech = images.sum(axis=0)
    noise = car_noise(rng, placement.microphones, speech.shape[1], sample_rate, room.speed_of_sound)
    p_s = np.mean(speech**2)
    p_n = np.mean(noise**2)
    noise *= np.sqrt(p_s / (p_n * 10 ** (snr_db / 10)))
    mixture = AudioBuffer(speech + noise, sample_rate)
    reference = [
        Segment(recording_id, round(on, 2), round(off - on, 2), f"spk{i}")
        for i, act in enumerate(activity)
        for on, off in act
    ]
    return SyntheticScene(mixture, images, dry, noise, reference, room, placement)
