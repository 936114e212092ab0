"""Guided source separation.

Speaker activity taken from an RTTM constrains the class posteriors of a
complex angular central Gaussian mixture (cACGMM) fitted per frequency on
unit-normalised observation vectors. The resulting time-frequency masks
drive a Souden MVDR beamformer for each target speaker.

Array layout throughout: observations ``(F, T, D)``, masks ``(K, T, F)``,
shape matrices ``(K, F, D, D)``. The last class is the always-on noise class.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .diarization.rttm import Segment
from .dsp import AudioBuffer, Spectrogram, StftConfig, istft, stft
from .errors import DataError

log = logging.getLogger(__name__)


@dataclass
class ActivityMatrix:
    """Binary class activity ``(K, T)``; row ``K-1`` is the noise class."""

    active: np.ndarray
    speakers: Tuple[str, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.active, dtype=bool)
        if a.ndim != 2 or a.shape[0] < 1:
            raise DataError(f"activity must be (classes, frames), got {a.shape}")
        if not a[-1].all():
            raise DataError("noise class (last row) must be active in every frame")
        if len(self.speakers) not in (0, a.shape[0] - 1):
            raise DataError("speaker labels do not match the number of classes")
        self.active = a

    @property
    def num_classes(self) -> int:
        return self.active.shape[0]

    @property
    def frames(self) -> int:
        return self.active.shape[1]

    def class_of(self, speaker: str) -> int:
        try:
            return self.speakers.index(speaker)
        except ValueError:
            raise DataError(f"speaker {speaker!r} has no activity class") from None


@dataclass
class MaskTensor:
    gamma: np.ndarray  # (K, T, F)


@dataclass
class CacgmmState:
    weights: np.ndarray  # (K, F)
    shapes: np.ndarray  # (K, F, D, D)
    masks: Optional[MaskTensor] = None


@dataclass
class BeamformerWeights:
    phi_target: np.ndarray  # (F, D, D)
    phi_noise: np.ndarray  # (F, D, D)
    w: np.ndarray  # (F, D)
    ref_channel: int


# ---------------------------------------------------------------------------
# activity


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def speaker_order(segments: Iterable[Segment]) -> Tuple[str, ...]:
    """Speakers ordered by first onset, then total duration, then label.

    Ordering on timing rather than label keeps the computation identical
    under speaker relabelling.
    """
    first: Dict[str, float] = {}
    total: Dict[str, float] = {}
    for s in segments:
        first[s.speaker_id] = min(first.get(s.speaker_id, math.inf), s.onset)
        total[s.speaker_id] = total.get(s.speaker_id, 0.0) + s.duration
    return tuple(sorted(first, key=lambda k: (first[k], -total[k], k)))


def activity_from_rttm(
    rttm: Sequence[Segment],
    recording_id: str,
    frames: int,
    hop_seconds: float,
    context_seconds: float = 0.0,
    offset_seconds: float = 0.0,
) -> ActivityMatrix:
    """Frame-level activity for every speaker of ``recording_id``.

    Frame ``t`` sits at time ``offset_seconds + t * hop_seconds``; it is
    active for a speaker when that time falls inside one of the speaker's
    segments, after each segment is widened by ``ceil(context/hop)`` frames
    on both sides.
    """
    if frames < 1:
        raise DataError("need at least one frame")
    if hop_seconds <= 0:
        raise DataError("hop must be positive")
    segs = [s for s in rttm if s.recording_id == recording_id]
    if rttm and not segs:
        raise DataError(f"recording {recording_id!r} not present in RTTM")
    speakers = speaker_order(segs)
    a = np.zeros((len(speakers) + 1, frames), dtype=bool)
    a[-1] = True
    pad = _ceil(context_seconds / hop_seconds) if context_seconds > 0 else 0
    for s in segs:
        k = speakers.index(s.speaker_id)
        lo = _ceil((s.onset - offset_seconds) / hop_seconds) - pad
        hi = _ceil((s.end - offset_seconds) / hop_seconds) + pad
        lo, hi = max(lo, 0), min(hi, frames)
        if hi > lo:
            a[k, lo:hi] = True
    return ActivityMatrix(a, speakers)


# ---------------------------------------------------------------------------
# cACGMM EM


def _normalize(obs: np.ndarray):
    norm = np.linalg.norm(obs, axis=-1)
    valid = norm > 0
    z = np.where(valid[..., None], obs / np.where(valid, norm, 1.0)[..., None], 0.0)
    return z, valid


def _outer(z: np.ndarray) -> np.ndarray:
    """Flattened ``conj(z) z^T`` per observation as interleaved real/imag, ``(F, T, 2*D*D)``.

    With this layout the quadratic forms of the E-step and the scatter
    matrices of the M-step both become one real batched matrix product per
    frequency.
    """
    f, t, d = z.shape
    zz = np.ascontiguousarray((z.conj()[..., :, None] * z[..., None, :]).reshape(f, t, d * d))
    return zz.view(np.float64)


def _quadratic(zz: np.ndarray, shapes: np.ndarray):
    """``z^H B^{-1} z`` as ``(K, F, T)``, plus ``log det B`` as ``(K, F)``."""
    k, f, d, _ = shapes.shape
    inv = np.linalg.inv(shapes).reshape(k, f, d * d)
    # Re(a b) = a.re b.re - a.im b.im, matching the interleaved layout of zz
    coef = np.empty((f, 2 * d * d, k))
    coef[:, 0::2, :] = inv.real.transpose(1, 2, 0)
    coef[:, 1::2, :] = -inv.imag.transpose(1, 2, 0)
    quad = (zz @ coef).transpose(2, 0, 1)
    _, logdet = np.linalg.slogdet(shapes)
    return np.maximum(quad, 1e-300), logdet


def _logsumexp0(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=0)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.exp(a - m[None]).sum(axis=0))


def _e_step(zz, valid, log_prior, weights, shapes):
    """Posteriors (K, F, T), per-frequency log-likelihood (F,) and the quadratic forms."""
    d = shapes.shape[-1]
    quad, logdet = _quadratic(zz, shapes)
    const = gammaln(d) - math.log(2.0) - d * math.log(math.pi)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    log_joint = log_prior[:, None, :] + log_w[:, :, None] + const - logdet[:, :, None] - d * np.log(quad)
    norm = _logsumexp0(log_joint)
    gamma = np.exp(log_joint - norm[None])
    ll = np.where(valid, norm, 0.0).sum(axis=-1)
    # frames without direction information keep the (guided) prior
    if not valid.all():
        lp = log_prior[:, None, :] + log_w[:, :, None]
        prior = np.exp(lp - _logsumexp0(lp)[None])
        gamma = np.where(valid[None], gamma, prior)
    return gamma, ll, quad


def _m_step(zz, valid, gamma, quad, shapes, epsilon):
    k, f, d = shapes.shape[0], shapes.shape[1], shapes.shape[-1]
    g = np.where(valid[None], gamma, 0.0)
    n_valid = np.maximum(valid.sum(axis=-1), 1)
    weights = g.sum(axis=-1) / n_valid[None]
    mass = g.sum(axis=-1)  # (K, F)
    w = (g / quad).transpose(1, 0, 2)  # (F, K, T)
    scatter = np.ascontiguousarray(w @ zz).view(complex).conj().reshape(f, k, d, d).transpose(1, 0, 2, 3)
    new = d * scatter / np.maximum(mass, 1e-300)[..., None, None]
    new = 0.5 * (new + np.swapaxes(new.conj(), -1, -2))
    tr = np.trace(new, axis1=-2, axis2=-1).real
    ok = (mass > 0) & (tr > 0)
    new = np.where(ok[..., None, None], new * (d / np.where(ok, tr, 1.0))[..., None, None], shapes)
    new = new + epsilon * d * np.eye(d)
    weights = np.maximum(weights, 0.0)
    weights = weights / weights.sum(axis=0, keepdims=True)
    return weights, new


EM_BLOCK = 64  # frequencies per EM block; bounds the size of the outer-product cache


def _tied_init(z: np.ndarray, valid: np.ndarray, a: np.ndarray, mix: float = 0.5):
    """Initial shape matrices ``(K, F, D, D)``.

    Every class starts at the identity, except speaker classes whose
    activity row duplicates another class: guidance cannot tell those apart,
    so the i-th of them starts on the i-th principal direction of its
    active observations. The noise class always keeps the identity.
    """
    k = a.shape[0]
    f, _, d = z.shape
    shapes = np.broadcast_to(np.eye(d, dtype=complex), (k, f, d, d)).copy()
    groups: Dict[bytes, List[int]] = {}
    for j in range(k):
        groups.setdefault(a[j].tobytes(), []).append(j)
    for members in groups.values():
        tied = [j for j in members if j != k - 1]
        if len(members) < 2 or not tied:
            continue
        frames = a[tied[0]][None, :] & valid
        cov = np.einsum("ft,ftd,fte->fde", frames.astype(float), z, z.conj()) / np.maximum(frames.sum(-1), 1)[:, None, None]
        _, vecs = np.linalg.eigh(cov)
        for rank, j in enumerate(tied[: d]):
            v = vecs[:, :, d - 1 - rank]
            shapes[j] = mix * np.eye(d) + (1.0 - mix) * d * v[:, :, None] * v[:, None, :].conj()
    return shapes


def _em_block(z, valid, log_prior, k, iterations, epsilon, shapes):
    f, t, d = z.shape
    zz = _outer(z)
    weights = np.full((k, f), 1.0 / k)
    trace = np.zeros((iterations + 1, f))
    gamma, trace[0], quad = _e_step(zz, valid, log_prior, weights, shapes)
    for i in range(1, iterations + 1):
        w_new, b_new = _m_step(zz, valid, gamma, quad, shapes, epsilon)
        g_new, ll, q_new = _e_step(zz, valid, log_prior, w_new, b_new)
        # Trace normalisation and loading are not part of the likelihood
        # maximisation, so a class collapsing onto a few frames can lose
        # likelihood. Such bands keep their previous model (safeguarded EM).
        up = ll >= trace[i - 1]
        weights = np.where(up[None], w_new, weights)
        shapes = np.where(up[None, :, None, None], b_new, shapes)
        gamma = np.where(up[None, :, None], g_new, gamma)
        quad = np.where(up[None, :, None], q_new, quad)
        trace[i] = np.where(up, ll, trace[i - 1])
    return weights, shapes, gamma, trace


def em_fit(
    spec: Spectrogram,
    activity,
    iterations: int = 20,
    epsilon: float = 1e-10,
) -> Tuple[CacgmmState, np.ndarray]:
    """Fit the guided cACGMM.

    Returns the final state (with posteriors attached as ``state.masks``)
    and the log-likelihood trace of shape ``(iterations + 1, F)``: row 0 is
    the initial model, row ``i`` the model after ``i`` EM updates. Bands
    are independent, so the fit runs block-wise over frequency.
    """
    a = activity.active if isinstance(activity, ActivityMatrix) else np.asarray(activity, dtype=bool)
    if iterations < 1:
        raise DataError("iterations must be >= 1")
    obs = spec.observations()
    f, t, d = obs.shape
    k = a.shape[0]
    if a.shape[1] != t:
        raise DataError(f"activity has {a.shape[1]} frames, spectrogram has {t}")
    if d < 2 and k > 1:
        raise DataError("guided separation needs at least two channels")
    if k > d + 6:
        warnings.warn(f"{k} classes for {d} channels; the mixture is poorly identifiable", RuntimeWarning)
    z, valid = _normalize(obs)
    with np.errstate(divide="ignore"):
        log_prior = np.log(a.astype(float))

    weights = np.empty((k, f))
    shapes = np.empty((k, f, d, d), dtype=complex)
    gamma = np.empty((k, t, f))
    trace = np.empty((iterations + 1, f))
    for lo in range(0, f, EM_BLOCK):
        hi = min(f, lo + EM_BLOCK)
        init = _tied_init(z[lo:hi], valid[lo:hi], a)
        w, b, g, tr = _em_block(z[lo:hi], valid[lo:hi], log_prior, k, iterations, epsilon, init)
        weights[:, lo:hi], shapes[:, lo:hi], trace[:, lo:hi] = w, b, tr
        gamma[:, :, lo:hi] = g.transpose(0, 2, 1)
    return CacgmmState(weights, shapes, MaskTensor(gamma)), trace


# ---------------------------------------------------------------------------
# beamforming


def spatial_covariances(spec: Spectrogram, mask: MaskTensor, target_k: int):
    """Target and interference covariances ``(F, D, D)`` for class ``target_k``.

    Returns ``(phi_s, phi_n, fallback)`` where ``fallback`` is a ``(2, F)``
    boolean array flagging frequencies whose mask mass was zero and which
    therefore use the unmasked covariance instead.
    """
    gamma = mask.gamma
    if not 0 <= target_k < gamma.shape[0] - 1:
        raise DataError(f"target class {target_k} must be a speaker class (< {gamma.shape[0] - 1})")
    x = spec.observations()  # (F, T, D)
    g = gamma[target_k].T  # (F, T)
    plain = np.swapaxes(x, -1, -2) @ x.conj() / max(x.shape[1], 1)

    def weighted(m):
        mass = m.sum(axis=-1)
        phi = np.swapaxes(x * m[..., None], -1, -2) @ x.conj()
        empty = mass <= 0
        phi = np.where(empty[:, None, None], plain, phi / np.where(empty, 1.0, mass)[:, None, None])
        return 0.5 * (phi + np.swapaxes(phi.conj(), -1, -2)), empty

    phi_s, fs = weighted(g)
    phi_n, fn = weighted(1.0 - g)
    return phi_s, phi_n, np.stack([fs, fn])


def mvdr_souden(phi_s: np.ndarray, phi_n: np.ndarray, ref_channel: int = 0, loading: float = 1e-6) -> BeamformerWeights:
    """Souden MVDR: ``w = (Phi_n^-1 Phi_s / tr(Phi_n^-1 Phi_s)) e_ref``.

    ``loading`` is relative to the mean noise eigenvalue.
    """
    f, d, _ = phi_n.shape
    if not 0 <= ref_channel < d:
        raise DataError(f"reference channel {ref_channel} out of range for {d} channels")
    tr = np.trace(phi_n, axis1=-2, axis2=-1).real / d
    scale = np.where(tr > 0, tr, 1.0)
    loaded = phi_n + (loading * scale)[:, None, None] * np.eye(d)
    cond = np.linalg.cond(loaded)
    bad = np.nonzero(~np.isfinite(cond) | (cond > 1e12))[0]
    if bad.size:
        raise DataError(f"noise covariance near-singular at frequency index {int(bad[0])}")
    num = np.linalg.solve(loaded, phi_s)
    lam = np.trace(num, axis1=-2, axis2=-1)
    safe = np.abs(lam) > 1e-300
    w = np.where(safe[:, None], num[:, :, ref_channel] / np.where(safe, lam, 1.0)[:, None], 0.0)
    return BeamformerWeights(phi_s, phi_n, w, ref_channel)


def select_reference(phi_s: np.ndarray, phi_n: np.ndarray, loading: float = 1e-6) -> int:
    """Reference channel whose Souden beamformer has the highest output SNR."""
    d = phi_s.shape[-1]
    best, best_snr = 0, -np.inf
    for ref in range(d):
        w = mvdr_souden(phi_s, phi_n, ref, loading).w
        s = np.einsum("fd,fde,fe->", w.conj(), phi_s, w).real
        n = np.einsum("fd,fde,fe->", w.conj(), phi_n, w).real
        snr = s / n if n > 0 else np.inf
        if snr > best_snr:
            best, best_snr = ref, snr
    return best


def apply_beamformer(spec: Spectrogram, weights: BeamformerWeights) -> np.ndarray:
    """Beamformer output ``(T, F)``."""
    return np.einsum("fd,ftd->tf", weights.w.conj(), spec.observations())


# ---------------------------------------------------------------------------
# full recipe


@dataclass(frozen=True)
class GssConfig:
    stft: StftConfig = StftConfig()
    iterations: int = 20
    epsilon: float = 1e-10
    context: float = 15.0
    post_mask: bool = True
    mask_floor: float = 0.1
    ref_channel: Optional[int] = None  # None: pick by beamformer output SNR
    loading: float = 1e-6
    activity_context: float = 0.2
    seed: int = 0


def _as_segment(segment, recording_id: Optional[str]) -> Segment:
    if isinstance(segment, Segment):
        return segment
    spk, onset, duration = segment
    return Segment(recording_id or "", float(onset), float(duration), str(spk))


def enhance_segments(
    audio: AudioBuffer,
    rttm: Sequence[Segment],
    segments: Sequence,
    config: GssConfig = GssConfig(),
    recording_id: Optional[str] = None,
    return_reference: bool = False,
):
    """Run GSS for several segments of one recording.

    Segments whose context windows coincide share a single EM fit, which
    is the common case when the context spans the whole recording. With
    ``return_reference`` the beamformer reference channel of every segment
    is returned alongside the audio.
    """
    segs = [_as_segment(s, recording_id) for s in segments]
    if not segs:
        return []
    rec = recording_id if recording_id is not None else segs[0].recording_id
    fs = audio.sample_rate
    cfg = config.stft
    n_total = audio.num_samples
    if audio.channels < 2:
        raise DataError("GSS needs multi-channel audio")

    plans = []
    for s in segs:
        start = int(round(s.onset * fs))
        length = int(round(s.duration * fs))
        if s.onset < 0 or start + length > n_total:
            raise DataError(f"segment {s.onset:.2f}+{s.duration:.2f}s outside recording ({n_total / fs:.2f}s)")
        if length < cfg.window_length:
            raise DataError(f"segment of {length} samples shorter than one STFT window")
        c0 = max(0, int(math.floor((s.onset - config.context) * fs)))
        c1 = min(n_total, int(math.ceil((s.end + config.context) * fs)))
        plans.append((c0, c1, start, length, s))

    outputs: List[Optional[AudioBuffer]] = [None] * len(segs)
    reference_channels = [0] * len(segs)
    groups: Dict[Tuple[int, int], List[int]] = {}
    for i, (c0, c1, *_rest) in enumerate(plans):
        groups.setdefault((c0, c1), []).append(i)

    for (c0, c1), members in groups.items():
        pad_l = cfg.window_length
        body = c1 - c0 + 2 * pad_l
        padded_len = cfg.padded_length(body)
        x = np.zeros((audio.channels, padded_len))
        x[:, pad_l : pad_l + c1 - c0] = audio.samples[:, c0:c1]
        spec = stft(AudioBuffer(x, fs), cfg)
        hop_s = cfg.hop / fs
        offset = (c0 - pad_l + cfg.window_length / 2) / fs
        act = activity_from_rttm(rttm, rec, spec.frames, hop_s, config.activity_context, offset)
        state, _ = em_fit(spec, act, config.iterations, config.epsilon)
        for i in members:
            _, _, start, length, s = plans[i]
            k = act.class_of(s.speaker_id)
            phi_s, phi_n, _ = spatial_covariances(spec, state.masks, k)
            ref = config.ref_channel
            if ref is None:
                ref = select_reference(phi_s, phi_n, config.loading)
            bf = mvdr_souden(phi_s, phi_n, ref, config.loading)
            y = apply_beamformer(spec, bf)
            if config.post_mask:
                y = y * np.maximum(state.masks.gamma[k], config.mask_floor)
            out = istft(spec.with_data(y[None]))
            lo = start - c0 + pad_l
            outputs[i] = AudioBuffer(out.samples[:, lo : lo + length], fs)
            reference_channels[i] = ref
    if return_reference:
        return outputs, reference_channels
    return outputs


def gss_enhance(
    audio: AudioBuffer,
    rttm: Sequence[Segment],
    segment,
    config: GssConfig = GssConfig(),
    recording_id: Optional[str] = None,
) -> AudioBuffer:
    """Enhance one ``segment`` (a :class:`Segment` or ``(speaker, onset, duration)``)."""
    return enhance_segments(audio, rttm, [segment], config, recording_id)[0]
