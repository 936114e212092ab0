"""Hot inner loops, each with a numba kernel and a numpy twin.

The public names (``rir_accumulate``, ``sinc_resample``, ``hangover``) are
bound at import time to whichever backend ``_accel.USE_NUMBA`` selects.
Both variants stay importable under ``*_numba`` / ``*_numpy`` so tests and
the benchmark can compare them directly.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# fractional-delay impulse accumulation (image-source RIR)


@njit
def rir_accumulate_numba(delays, amplitudes, length, half_width, min_index):
    out = np.zeros(length)
    span = half_width + 1.0
    for i in range(delays.shape[0]):
        d = delays[i]
        a = amplitudes[i]
        if a == 0.0:
            continue
        center = int(math.floor(d + 0.5))
        for n in range(center - half_width, center + half_width + 1):
            if n < min_index or n >= length:
                continue
            u = n - d
            if abs(u) >= span:
                continue
            if u == 0.0:
                s = 1.0
            else:
                s = math.sin(math.pi * u) / (math.pi * u)
            w = 0.5 * (1.0 + math.cos(math.pi * u / span))
            out[n] += a * s * w
    return out


def rir_accumulate_numpy(delays, amplitudes, length, half_width, min_index):
    delays = np.asarray(delays, dtype=np.float64)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    keep = amplitudes != 0.0
    delays, amplitudes = delays[keep], amplitudes[keep]
    span = half_width + 1.0
    centers = np.floor(delays + 0.5).astype(np.int64)
    offsets = np.arange(-half_width, half_width + 1)
    idx = centers[:, None] + offsets[None, :]
    u = idx - delays[:, None]
    vals = amplitudes[:, None] * np.sinc(u) * 0.5 * (1.0 + np.cos(np.pi * u / span))
    valid = (idx >= min_index) & (idx < length) & (np.abs(u) < span)
    return np.bincount(idx[valid], weights=vals[valid], minlength=length)[:length]


# ---------------------------------------------------------------------------
# windowed-sinc resampling at an arbitrary ratio


@njit
def sinc_resample_numba(x, factor, out_len, half_taps):
    n = x.shape[0]
    y = np.zeros(out_len)
    cutoff = min(1.0, 1.0 / factor)
    for j in range(out_len):
        t = j * factor
        base = int(math.floor(t))
        acc = 0.0
        for i in range(base - half_taps + 1, base + half_taps + 1):
            if i < 0 or i >= n:
                continue
            u = t - i
            if abs(u) >= half_taps:
                continue
            v = cutoff * u
            if v == 0.0:
                s = cutoff
            else:
                s = cutoff * math.sin(math.pi * v) / (math.pi * v)
            w = 0.5 * (1.0 + math.cos(math.pi * u / half_taps))
            acc += x[i] * s * w
        y[j] = acc
    return y


def sinc_resample_numpy(x, factor, out_len, half_taps, block=4096):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    y = np.zeros(out_len)
    cutoff = min(1.0, 1.0 / factor)
    offsets = np.arange(-half_taps + 1, half_taps + 1)
    for start in range(0, out_len, block):
        j = np.arange(start, min(start + block, out_len))
        t = j * factor
        idx = np.floor(t).astype(np.int64)[:, None] + offsets[None, :]
        u = t[:, None] - idx
        kern = cutoff * np.sinc(cutoff * u) * 0.5 * (1.0 + np.cos(np.pi * u / half_taps))
        kern[(idx < 0) | (idx >= n) | (np.abs(u) >= half_taps)] = 0.0
        y[j] = np.sum(x[np.clip(idx, 0, max(n - 1, 0))] * kern, axis=1)
    return y


# ---------------------------------------------------------------------------
# VAD hangover: extend each active run by ``frames`` trailing frames


@njit
def hangover_numba(active, frames):
    out = np.zeros(active.shape[0], dtype=np.bool_)
    count = 0
    for t in range(active.shape[0]):
        if active[t]:
            count = frames
            out[t] = True
        elif count > 0:
            count -= 1
            out[t] = True
    return out


def hangover_numpy(active, frames):
    active = np.asarray(active, dtype=bool)
    if frames <= 0 or active.size == 0:
        return active.copy()
    # index of the most recent active frame at or before t
    idx = np.where(active, np.arange(active.size), -1)
    last = np.maximum.accumulate(idx)
    return (last >= 0) & (np.arange(active.size) - last <= frames)


if USE_NUMBA:
    rir_accumulate = rir_accumulate_numba
    sinc_resample = sinc_resample_numba
    hangover = hangover_numba
else:
    rir_accumulate = rir_accumulate_numpy
    sinc_resample = sinc_resample_numpy
    hangover = hangover_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
