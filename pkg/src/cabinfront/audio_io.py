"""WAV read/write (PCM16 and float32, little-endian) with atomic writes."""
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import AudioBuffer
from .errors import DataError


def read_wav(path) -> AudioBuffer:
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    x = x[:, None] if x.ndim == 1 else x
    return AudioBuffer(x.T, rate)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_wav(path, audio: AudioBuffer, fmt: str = "float32") -> None:
    """Write ``audio``; ``fmt`` is ``"float32"`` or ``"pcm16"``."""
    x = audio.samples.T
    if fmt == "float32":
        data = x.astype("<f4")
    elif fmt == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    else:
        raise ValueError(f"unknown wav format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        wavfile.write(tmp, audio.sample_rate, data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
