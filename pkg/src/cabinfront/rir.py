"""Image-source room impulse responses and far-field scene simulation.

The room is an axis-aligned shoebox ``[0, Lx] x [0, Ly] x [0, Lz]`` with a
single absorption coefficient for all six walls. Every image source is
rendered as a Hann-windowed sinc (81 taps) at its fractional delay; taps
that would land more than one sample before the direct path are dropped so
the response stays causal relative to the direct sound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from . import config as cfgmod
from . import kernels
from .dsp import AudioBuffer
from .errors import ConfigError, DataError

SINC_HALF_WIDTH = 40  # 81-tap fractional delay

Point = Tuple[float, float, float]


@dataclass(frozen=True)
class RoomSpec:
    dimensions: Tuple[float, float, float] = (2.8, 1.5, 1.2)
    absorption: float = 0.6
    max_order: int = 17
    speed_of_sound: float = 343.0
    sample_rate: int = 16000

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or min(dims) <= 0:
            raise ConfigError(f"room dimensions must be three positive lengths, got {self.dimensions}")
        object.__setattr__(self, "dimensions", dims)
        if not 0.0 < self.absorption <= 1.0:
            raise ConfigError(f"absorption must be in (0, 1], got {self.absorption}")
        if self.max_order < 0:
            raise ConfigError(f"max_order must be >= 0, got {self.max_order}")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise ConfigError("speed of sound and sample rate must be positive")

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))


@dataclass(frozen=True)
class ScenePlacement:
    sources: Tuple[Point, ...]
    microphones: Tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(tuple(map(float, p)) for p in self.sources))
        object.__setattr__(self, "microphones", tuple(tuple(map(float, p)) for p in self.microphones))
        if not self.sources or not self.microphones:
            raise ConfigError("need at least one source and one microphone")
        for p in self.sources + self.microphones:
            if len(p) != 3:
                raise ConfigError(f"points must be 3-D, got {p}")
        for s in self.sources:
            for m in self.microphones:
                if np.allclose(s, m):
                    raise ConfigError(f"source {s} coincides with microphone {m}")

    def validate(self, room: RoomSpec) -> None:
        for p in self.sources + self.microphones:
            if not room.contains(p):
                raise DataError(f"point {p} is not strictly inside room {room.dimensions}")


@dataclass
class ImpulseResponse:
    taps: np.ndarray
    sample_rate: int
    direct_delay: float  # in samples, fractional

    @property
    def direct_index(self) -> int:
        return int(round(self.direct_delay))


@dataclass
class ImageSet:
    """All image sources of one (source, mic) pair up to the reflection order."""

    positions: np.ndarray  # (M, 3)
    orders: np.ndarray  # (M,) total wall bounces
    distances: np.ndarray  # (M,) meters
    amplitudes: np.ndarray  # (M,)
    delays: np.ndarray  # (M,) samples


def _axis_images(coord: float, length: float, max_order: int):
    pos, refl = [], []
    lim = max_order // 2 + 1
    for n in range(-lim, lim + 1):
        for q in (0, 1):
            r = abs(2 * n - q)
            if r <= max_order:
                pos.append(2 * n * length + (1 - 2 * q) * coord)
                refl.append(r)
    return np.asarray(pos), np.asarray(refl)


def image_sources(room: RoomSpec, source: Sequence[float], mic: Sequence[float]) -> ImageSet:
    source = np.asarray(source, dtype=float)
    mic = np.asarray(mic, dtype=float)
    for p in (source, mic):
        if not room.contains(p):
            raise DataError(f"point {tuple(p)} is not strictly inside room {room.dimensions}")
    axes = [_axis_images(source[i], room.dimensions[i], room.max_order) for i in range(3)]
    (px, rx), (py, ry), (pz, rz) = axes
    order = rx[:, None, None] + ry[None, :, None] + rz[None, None, :]
    keep = order <= room.max_order
    ix, iy, iz = np.nonzero(keep)
    positions = np.stack([px[ix], py[iy], pz[iz]], axis=1)
    orders = order[keep]
    dist = np.linalg.norm(positions - mic, axis=1)
    beta = math.sqrt(1.0 - room.absorption)
    amps = np.power(beta, orders) / (4.0 * np.pi * dist)
    delays = dist / room.speed_of_sound * room.sample_rate
    sort = np.argsort(delays, kind="stable")
    return ImageSet(positions[sort], orders[sort], dist[sort], amps[sort], delays[sort])


def image_source_rir(room: RoomSpec, source: Sequence[float], mic: Sequence[float]) -> ImpulseResponse:
    img = image_sources(room, source, mic)
    direct = float(img.delays[0])
    nonzero = img.amplitudes > 0
    length = int(math.ceil(img.delays[nonzero].max())) + SINC_HALF_WIDTH + 1
    guard = max(int(math.floor(direct)) - 1, 0)
    taps = kernels.rir_accumulate(
        np.ascontiguousarray(img.delays),
        np.ascontiguousarray(img.amplitudes),
        length,
        SINC_HALF_WIDTH,
        guard,
    )
    return ImpulseResponse(np.asarray(taps), room.sample_rate, direct)


def _check_dry(room: RoomSpec, placement: ScenePlacement, dry: Sequence[AudioBuffer]):
    if len(dry) != len(placement.sources):
        raise DataError(f"{len(dry)} dry signals for {len(placement.sources)} sources")
    for d in dry:
        if d.channels != 1:
            raise DataError("dry signals must be 1-channel")
        if d.sample_rate != room.sample_rate:
            raise DataError(f"dry sample rate {d.sample_rate} != room sample rate {room.sample_rate}")
    placement.validate(room)


def room_rirs(room: RoomSpec, placement: ScenePlacement) -> List[List[ImpulseResponse]]:
    """RIRs indexed ``[source][mic]``."""
    placement.validate(room)
    return [[image_source_rir(room, s, m) for m in placement.microphones] for s in placement.sources]


def simulate_images(
    room: RoomSpec,
    placement: ScenePlacement,
    dry: Sequence[AudioBuffer],
    rirs: Optional[List[List[ImpulseResponse]]] = None,
) -> np.ndarray:
    """Per-source reverberant images, shape ``(sources, mics, samples)``.

    The output is trimmed to the longest dry signal so images stay
    time-aligned with the close-talk references.
    """
    _check_dry(room, placement, dry)
    rirs = rirs if rirs is not None else room_rirs(room, placement)
    length = max(d.num_samples for d in dry)
    out = np.zeros((len(dry), len(placement.microphones), length))
    for s, d in enumerate(dry):
        x = d.samples[0]
        if x.size == 0:
            continue
        for m, h in enumerate(rirs[s]):
            y = fftconvolve(x, h.taps)[:length]
            out[s, m, : y.size] = y
    return out


def simulate_scene(
    room: RoomSpec,
    placement: ScenePlacement,
    dry: Sequence[AudioBuffer],
    rirs: Optional[List[List[ImpulseResponse]]] = None,
) -> AudioBuffer:
    images = simulate_images(room, placement, dry, rirs)
    return AudioBuffer(images.sum(axis=0), room.sample_rate)


# ---------------------------------------------------------------------------
# cabin preset and config files

CABIN_MICS: Tuple[Point, ...] = tuple((x, 0.75, 1.15) for x in (0.8, 1.2, 1.6, 2.0))
# driver, front passenger, rear left, rear right
CABIN_SEATS: Tuple[Point, ...] = (
    (1.0, 0.40, 0.95),
    (1.0, 1.10, 0.95),
    (2.1, 0.40, 0.95),
    (2.1, 1.10, 0.95),
)


def cabin_preset(sample_rate: int = 16000) -> Tuple[RoomSpec, ScenePlacement]:
    room = RoomSpec((2.8, 1.5, 1.2), absorption=0.6, max_order=17, sample_rate=sample_rate)
    return room, ScenePlacement(CABIN_SEATS, CABIN_MICS)


def room_from_config(cfg: Dict[str, str]) -> Tuple[RoomSpec, ScenePlacement]:
    """Build a room and placement from ``key = value`` entries.

    Recognised keys: ``dimensions``, ``absorption``, ``max_order``,
    ``speed_of_sound``, ``sample_rate``, ``source.<i>`` and ``mic.<i>``
    (comma-separated x, y, z in meters). Missing sources or mics fall back
    to the cabin preset.
    """
    base_room, base_place = cabin_preset()
    room = RoomSpec(
        dimensions=cfgmod.get_floats(cfg, "dimensions", base_room.dimensions),
        absorption=cfgmod.get_float(cfg, "absorption", base_room.absorption),
        max_order=cfgmod.get_int(cfg, "max_order", base_room.max_order),
        speed_of_sound=cfgmod.get_float(cfg, "speed_of_sound", base_room.speed_of_sound),
        sample_rate=cfgmod.get_int(cfg, "sample_rate", base_room.sample_rate),
    )

    def points(prefix):
        sub = cfgmod.section(cfg, prefix)
        try:
            keys = sorted(sub, key=int)
        except ValueError:
            raise ConfigError(f"{prefix}.<index> keys must be integers") from None
        return tuple(cfgmod.get_floats(sub, k) for k in keys)

    sources = points("source") or base_place.sources
    mics = points("mic") or base_place.microphones
    placement = ScenePlacement(sources, mics)
    placement.validate(room)
    return room, placement
