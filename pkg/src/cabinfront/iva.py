"""Auxiliary-function IVA (AuxIVA) with iterative-projection updates.

Laplacian source prior over the frequency-stacked source vector, which is
what couples the per-frequency demixing matrices and removes the inner
permutation ambiguity. Scale is fixed afterwards by projection back onto a
reference microphone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .dsp import AudioBuffer, Spectrogram, StftConfig, istft, stft
from .errors import DataError

log = logging.getLogger(__name__)

R_FLOOR = 1e-8


@dataclass
class DemixingState:
    W: np.ndarray  # (F, D, D); row n of W[f] is w_n^H
    r: np.ndarray  # (D, T) source activations
    V: Optional[np.ndarray] = None  # (D, F, D, D) weighted covariances of the last sweep
    objective: List[float] = field(default_factory=list)


def demix(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``y[f, t] = W[f] x[f, t]`` with observations ``(F, T, D)``."""
    return x @ np.swapaxes(W, -1, -2)


def activations(y: np.ndarray) -> np.ndarray:
    """Frequency-pooled source magnitudes ``(D, T)``."""
    return np.sqrt(np.sum(np.abs(y) ** 2, axis=0)).T


def _contrast(x: np.ndarray, W: np.ndarray) -> Tuple[float, np.ndarray]:
    r = activations(demix(x, W))
    _, logdet = np.linalg.slogdet(W)
    return float(r.sum() / x.shape[1] - logdet.sum()), r


def objective(x: np.ndarray, W: np.ndarray) -> float:
    """Contrast minimised by AuxIVA: mean_t sum_n r_{n,t} - sum_f log|det W_f|."""
    return _contrast(x, W)[0]


def _solve(wv: np.ndarray, rhs: np.ndarray, n: int) -> np.ndarray:
    d = wv.shape[-1]
    cond = np.linalg.cond(wv)
    bad = ~np.isfinite(cond) | (cond > 1e12)
    if np.any(bad):
        tr = np.trace(wv[bad], axis1=-2, axis2=-1).real / d
        wv = wv.copy()
        wv[bad] += (1e-6 * np.maximum(np.abs(tr), 1e-12))[:, None, None] * np.eye(d)
        cond = np.linalg.cond(wv[bad])
        still = np.nonzero(~np.isfinite(cond) | (cond > 1e12))[0]
        if still.size:
            f = int(np.nonzero(bad)[0][still[0]])
            raise DataError(f"singular W V for source {n} at frequency index {f}")
    return np.linalg.solve(wv, rhs)


def auxiva(
    spec: Spectrogram,
    iterations: int = 30,
    W0: Optional[np.ndarray] = None,
    callback: Optional[Callable[[int, DemixingState], None]] = None,
) -> Tuple[Spectrogram, DemixingState]:
    """Separate a determined mixture; returns demixed spectrogram and state.

    ``state.objective`` holds the contrast before the first sweep and after
    each sweep, so it has ``iterations + 1`` entries.
    """
    x = spec.observations()  # (F, T, D)
    n_f, n_t, d = x.shape
    if d < 2:
        raise DataError("IVA needs at least two channels")
    if n_t < d:
        raise DataError(f"need at least {d} frames, got {n_t}")
    W = np.array(np.broadcast_to(np.eye(d, dtype=complex), (n_f, d, d))) if W0 is None else np.array(W0, dtype=complex)
    eye = np.eye(d, dtype=complex)
    state = DemixingState(W, np.zeros((d, n_t)))
    value, r = _contrast(x, W)
    state.objective.append(value)
    V = np.empty((d, n_f, d, d), dtype=complex)
    xt = np.swapaxes(x, -1, -2)  # (F, D, T)
    xc = x.conj()
    for it in range(iterations):
        phi = 1.0 / np.maximum(r, R_FLOOR)  # (D, T)
        for n in range(d):
            V[n] = (xt * phi[n][None, None, :]) @ xc / n_t
            wv = W @ V[n]
            w = _solve(wv, np.broadcast_to(eye[:, n], (n_f, d))[..., None], n)[..., 0]
            norm = np.sqrt(np.einsum("fd,fde,fe->f", w.conj(), V[n], w).real)
            w = w / np.maximum(norm, 1e-300)[:, None]
            W[:, n, :] = w.conj()
        state.r = r
        value, r = _contrast(x, W)
        state.objective.append(value)
        if callback is not None:
            callback(it, state)
    state.W, state.V, state.r = W, V, r
    y = demix(x, W)  # (F, T, D)
    return spec.with_data(np.ascontiguousarray(y.transpose(2, 1, 0))), state


def projection_back(demixed: Spectrogram, state: DemixingState, ref_channel: int = 0) -> Spectrogram:
    """Rescale each source to its image at ``ref_channel``."""
    W = state.W
    d = W.shape[-1]
    if d < 2:
        raise DataError("projection back needs at least two channels")
    if not 0 <= ref_channel < d:
        raise DataError(f"reference channel {ref_channel} out of range")
    cond = np.linalg.cond(W)
    bad = np.nonzero(~np.isfinite(cond) | (cond > 1e12))[0]
    if bad.size:
        raise DataError(f"demixing matrix singular at frequency index {int(bad[0])}")
    A = np.linalg.inv(W)  # (F, D, D)
    scale = A[:, ref_channel, :]  # (F, D)
    return demixed.with_data(demixed.data * scale.T[:, None, :])


@dataclass(frozen=True)
class IvaConfig:
    stft: StftConfig = StftConfig()
    iterations: int = 30
    ref_channel: int = 0


def iva_enhance(audio: AudioBuffer, config: IvaConfig = IvaConfig()) -> List[AudioBuffer]:
    """Separate ``audio`` into one mono stream per channel, loudest first."""
    cfg = config.stft
    if audio.num_samples < cfg.window_length:
        raise DataError(f"audio shorter than one STFT window ({cfg.window_length} samples)")
    if not np.any(audio.samples):
        raise DataError("input is all-zero; nothing to separate")
    pad = cfg.window_length
    n = audio.num_samples
    x = np.zeros((audio.channels, cfg.padded_length(n + 2 * pad)))
    x[:, pad : pad + n] = audio.samples
    spec = stft(AudioBuffer(x, audio.sample_rate), cfg)
    demixed, state = auxiva(spec, config.iterations)
    scaled = projection_back(demixed, state, config.ref_channel)
    out = istft(scaled).samples[:, pad : pad + n]
    order = np.argsort(-np.sum(out * out, axis=1), kind="stable")
    return [AudioBuffer(out[i : i + 1], audio.sample_rate) for i in order]
