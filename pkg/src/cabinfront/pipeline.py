"""Batch orchestration: augmentation corpus, Track I fusion, Track II refinement loop."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio_io import atomic_write_text, read_wav, write_wav
from .denoise import GateConfig, spectral_gate_denoise
from .diarization import (
    EmbeddingSet,
    Segment,
    VadConfig,
    der,
    energy_vad,
    quantize_inward,
    refine_rttm,
    serialize_rttm,
    spectral_cluster,
)
from .diarization.refine import union
from .dsp import AudioBuffer, is_music_like, mix_at_snr, speed_perturb
from .errors import CabinFrontError, DataError, HookError
from .gss import GssConfig, enhance_segments
from .hooks import DenoiseHook, ScoreHook, denoise_audio, score_audio
from .iva import IvaConfig, iva_enhance
from .manifest import ManifestEntry, write_manifest
from .report import SessionReport
from .rir import RoomSpec, ScenePlacement, room_rirs, simulate_scene

log = logging.getLogger(__name__)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map over a bounded thread pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def load_entry_audio(entry: ManifestEntry, base: Optional[Path] = None) -> AudioBuffer:
    """Read the channels and time span an entry points at."""
    audio = read_wav(entry.resolve(base))
    x = audio.samples
    if entry.channels is not None:
        if max(entry.channels) >= audio.channels:
            raise DataError(f"{entry.utterance_id}: channel {max(entry.channels)} not in {audio.channels}-channel file")
        x = x[list(entry.channels)]
    fs = audio.sample_rate
    start = int(round(entry.onset * fs))
    stop = x.shape[1] if entry.duration is None else start + int(round(entry.duration * fs))
    if stop > x.shape[1]:
        raise DataError(f"{entry.utterance_id}: span ends past the end of the file")
    return AudioBuffer(x[:, start:stop], fs)


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentConfig:
    snr_range: Tuple[float, float] = (0.0, 10.0)
    speed_factors: Tuple[float, ...] = (0.9, 1.0, 1.1)
    music_filter: bool = True
    flatness_band: Tuple[float, float] = (0.2, 0.6)
    energy_threshold_db: float = -30.0
    keep_clean: bool = False
    wav_format: str = "float32"


def augment_corpus(
    entries: Sequence[ManifestEntry],
    out_dir,
    room: RoomSpec,
    placement: ScenePlacement,
    noise_pool: Sequence[AudioBuffer],
    config: AugmentConfig = AugmentConfig(),
    seed: int = 0,
    workers: int = 1,
    base: Optional[Path] = None,
) -> List[ManifestEntry]:
    """Turn close-talk utterances into simulated far-field multi-channel ones.

    Each entry draws its own generator from ``SeedSequence(seed)`` spawned by
    position, so results do not depend on ``workers``. The speaker is placed
    at one of the placement's sources, the noise clip (one channel per mic)
    is mixed in at an SNR drawn uniformly from ``config.snr_range``.
    Unreadable or non-mono entries are skipped with a log line.
    """
    out_dir = Path(out_dir)
    if not entries:
        return []
    if not noise_pool:
        raise DataError("noise pool is empty")
    n_mics = len(placement.microphones)
    for i, nz in enumerate(noise_pool):
        if nz.channels != n_mics:
            raise DataError(f"noise clip {i} has {nz.channels} channels, expected {n_mics}")
        if nz.sample_rate != room.sample_rate:
            raise DataError(f"noise clip {i} sample rate {nz.sample_rate} != room {room.sample_rate}")
    lo, hi = config.snr_range
    if hi < lo:
        raise DataError("snr range is reversed")
    rir_cache = room_rirs(room, placement)
    seeds = np.random.SeedSequence(seed).spawn(len(entries))

    def one(job):
        entry, ss = job
        rng = np.random.default_rng(ss)
        # draw everything up front so skipping rules never shift the stream
        speed = float(config.speed_factors[rng.integers(len(config.speed_factors))])
        seat = int(rng.integers(len(placement.sources)))
        noise_idx = int(rng.integers(len(noise_pool)))
        snr = float(rng.uniform(lo, hi))
        try:
            clean = load_entry_audio(entry, base)
        except CabinFrontError as exc:
            log.warning("skipping %s: %s", entry.utterance_id, exc)
            return None
        if clean.channels != 1:
            log.warning("skipping %s: close-talk audio must be mono, got %d channels", entry.utterance_id, clean.channels)
            return None
        if clean.sample_rate != room.sample_rate:
            log.warning("skipping %s: sample rate %d != %d", entry.utterance_id, clean.sample_rate, room.sample_rate)
            return None
        if config.music_filter and is_music_like(
            clean, flatness_band=config.flatness_band, energy_threshold_db=config.energy_threshold_db
        ):
            log.info("dropping %s: music-like", entry.utterance_id)
            return None
        dry = speed_perturb(clean, speed) if speed != 1.0 else clean
        one_src = ScenePlacement((placement.sources[seat],), placement.microphones)
        far = simulate_scene(room, one_src, [dry], [rir_cache[seat]])
        try:
            mixed = mix_at_snr(far, noise_pool[noise_idx], snr, rng_offset=True, rng=rng, loop=True)
        except DataError as exc:
            log.warning("skipping %s: %s", entry.utterance_id, exc)
            return None
        name = f"{entry.utterance_id}.wav"
        write_wav(out_dir / name, mixed, config.wav_format)
        extra = {"snr_db": snr, "speed": speed, "seat": seat, "noise": noise_idx, "source": entry.path}
        if config.keep_clean:
            write_wav(out_dir / "clean" / name, far, config.wav_format)
            extra["clean_path"] = f"clean/{name}"
        return ManifestEntry(
            entry.utterance_id,
            name,
            tuple(range(n_mics)),
            0.0,
            mixed.num_samples / mixed.sample_rate,
            entry.speaker,
            entry.transcription,
            extra,
        )

    results = _map(one, list(zip(entries, seeds)), workers)
    out = [r for r in results if r is not None]
    write_manifest(out_dir / "manifest.jsonl", out)
    return out


# ---------------------------------------------------------------------------
# Track I: GSS / IVA candidates, pick by ASR score


@dataclass
class Selection:
    utterance_id: str
    selected: str
    scores: Dict[str, float]
    scored: bool
    path: str

    def to_json_dict(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "selected": self.selected,
            "scored": self.scored,
            "scores": dict(self.scores),
            "path": self.path,
        }


def select_candidate(scores: Dict[str, float]) -> str:
    """Argmax of ``scores``; ``"gss"`` wins ties and is the empty-table default."""
    best_tag, best = "gss", scores.get("gss", -math.inf)
    for tag in sorted(scores):
        if scores[tag] > best:
            best_tag, best = tag, scores[tag]
    return best_tag


def _segment_name(seg: Segment) -> str:
    on = int(round(seg.onset * 1000))
    end = int(round(seg.end * 1000))
    return f"{seg.recording_id}-{seg.speaker_id}-{on}-{end}"


def track1_infer(
    entries: Sequence[ManifestEntry],
    rttm: Sequence[Segment],
    asr_hook: ScoreHook,
    out_dir,
    gss_config: GssConfig = GssConfig(),
    iva_config: IvaConfig = IvaConfig(),
    workers: int = 1,
    base: Optional[Path] = None,
    use_iva: bool = True,
) -> List[Selection]:
    """Enhance every utterance with GSS and IVA, keep the best-scoring candidate.

    ``entries`` name multi-channel recordings; ``onset``, ``duration`` and
    ``speaker`` give the utterance, and the recording id is the file stem.
    IVA runs on the utterance span alone and each of its outputs is a
    separate candidate (``iva-0`` loudest). Candidates whose scoring fails
    are dropped; if none can be scored the GSS output is kept unscored.
    """
    out_dir = Path(out_dir)
    cand_dir = out_dir / "candidates"

    def one(entry: ManifestEntry) -> Selection:
        if entry.speaker is None or entry.duration is None:
            raise DataError(f"{entry.utterance_id}: Track I entries need speaker and duration")
        path = entry.resolve(base)
        rec = Path(entry.path).stem
        full = read_wav(path)
        if entry.channels is not None:
            full = AudioBuffer(full.samples[list(entry.channels)], full.sample_rate)
        seg = Segment(rec, entry.onset, entry.duration, entry.speaker)
        gss_out = enhance_segments(full, rttm, [seg], gss_config, rec)[0]
        cands: List[Tuple[str, AudioBuffer]] = [("gss", gss_out)]
        if use_iva:
            fs = full.sample_rate
            start = int(round(entry.onset * fs))
            span = full.slice(start, start + gss_out.num_samples)
            try:
                cands += [(f"iva-{i}", o) for i, o in enumerate(iva_enhance(span, iva_config))]
            except DataError as exc:
                log.warning("%s: IVA failed (%s); GSS only", entry.utterance_id, exc)
        scores: Dict[str, float] = {}
        for tag, audio in cands:
            p = cand_dir / f"{entry.utterance_id}.{tag}.wav"
            write_wav(p, audio)
            try:
                scores[tag] = score_audio(asr_hook, p, entry.utterance_id, tag)
            except HookError as exc:
                log.warning("%s/%s: scoring failed: %s", entry.utterance_id, tag, exc)
        chosen = select_candidate(scores)
        audio = dict(cands)[chosen]
        out_path = out_dir / f"{entry.utterance_id}.wav"
        write_wav(out_path, audio)
        return Selection(entry.utterance_id, chosen, scores, bool(scores), out_path.name)

    selections = _map(one, list(entries), workers)
    lines = "".join(json.dumps(s.to_json_dict()) + "\n" for s in selections)
    atomic_write_text(out_dir / "selection.jsonl", lines)
    return selections


# ---------------------------------------------------------------------------
# Track II: diarize -> GSS -> denoise -> VAD -> refine -> GSS


@dataclass(frozen=True)
class Track2Config:
    gss: GssConfig = GssConfig()
    vad: VadConfig = VadConfig()
    gate: GateConfig = GateConfig()
    min_dur: float = 0.1
    gap_merge: float = 0.3
    passes: int = 2  # GSS passes; passes - 1 refinements
    max_speakers: int = 8
    cluster_p: float = 0.2
    seed: int = 0
    collar: float = 0.25


@dataclass
class Track2Result:
    rttm1: List[Segment]
    rttm2: List[Segment]
    outputs: Dict[str, AudioBuffer] = field(default_factory=dict)
    report: Optional[SessionReport] = None


def rttm_from_embeddings(emb: EmbeddingSet, config: Track2Config = Track2Config()) -> List[Segment]:
    labels = spectral_cluster(emb, max_speakers=config.max_speakers, p=config.cluster_p, seed=config.seed)
    segs = [Segment(s.recording_id, s.onset, s.duration, f"spk{int(l)}") for s, l in zip(emb.segments, labels)]
    return sorted(segs, key=lambda s: (s.recording_id, s.onset, s.speaker_id))


def _denoise(audio: AudioBuffer, hook: Optional[DenoiseHook], gate: GateConfig) -> AudioBuffer:
    if hook is not None:
        try:
            return denoise_audio(hook, audio)
        except HookError as exc:
            log.warning("denoise hook failed (%s); using built-in spectral gate", exc)
    return spectral_gate_denoise(audio, gate)


def _enhanceable(segs: Sequence[Segment], audio: AudioBuffer, config: GssConfig) -> List[Segment]:
    fs = audio.sample_rate
    keep = []
    for s in segs:
        n = int(round(s.duration * fs))
        if n < config.stft.window_length:
            log.warning("segment %s too short for GSS; left out of enhancement", _segment_name(s))
        elif int(round(s.onset * fs)) + n > audio.num_samples:
            log.warning("segment %s runs past the recording; left out of enhancement", _segment_name(s))
        else:
            keep.append(s)
    return keep


def _merge_turns(segs: Sequence[Segment]) -> List[Segment]:
    by: Dict[Tuple[str, str], list] = {}
    ch: Dict[Tuple[str, str], str] = {}
    for s in segs:
        by.setdefault((s.recording_id, s.speaker_id), []).append((s.onset, s.end))
        ch.setdefault((s.recording_id, s.speaker_id), s.channel)
    out = [Segment(r, a, b - a, k, ch[(r, k)]) for (r, k), iv in by.items() for a, b in union(iv)]
    return sorted(out, key=lambda s: (s.recording_id, s.onset, s.speaker_id))


def refine_pass(
    audio: AudioBuffer,
    rttm: Sequence[Segment],
    recording_id: str,
    config: Track2Config = Track2Config(),
    denoise_hook: Optional[DenoiseHook] = None,
) -> List[Segment]:
    """One GSS -> denoise -> VAD -> refine round for a single recording.

    VAD runs on each speaker's own enhanced stream, and that speaker's turns
    are refined only against it; the result is snapped inward to 10 ms.
    """
    rttm = _merge_turns([s for s in rttm if s.recording_id == recording_id])
    segs = _enhanceable(rttm, audio, config.gss)
    outs = enhance_segments(audio, rttm, segs, config.gss, recording_id) if segs else []
    regions: Dict[str, list] = {}
    for seg, out in zip(segs, outs):
        clean = _denoise(out, denoise_hook, config.gate)
        for on, dur in energy_vad(clean, config.vad):
            regions.setdefault(seg.speaker_id, []).append((seg.onset + on, dur))
    refined: List[Segment] = []
    for spk in sorted({s.speaker_id for s in rttm}):
        mine = [s for s in rttm if s.speaker_id == spk]
        enhanced = {(s.onset, s.duration) for s in segs if s.speaker_id == spk}
        # turns GSS could not process pass through untouched
        refined += [s for s in mine if (s.onset, s.duration) not in enhanced]
        todo = [s for s in mine if (s.onset, s.duration) in enhanced]
        if todo:
            refined += refine_rttm(todo, {recording_id: regions.get(spk, [])}, config.min_dur, config.gap_merge)
    refined = quantize_inward(refined)
    return sorted(refined, key=lambda s: (s.recording_id, s.onset, s.speaker_id))


def track2_pipeline(
    audio: AudioBuffer,
    recording_id: str,
    out_dir=None,
    rttm1: Optional[Sequence[Segment]] = None,
    embeddings: Optional[EmbeddingSet] = None,
    denoise_hook: Optional[DenoiseHook] = None,
    config: Track2Config = Track2Config(),
    reference: Optional[Sequence[Segment]] = None,
) -> Track2Result:
    """Two-pass diarization-guided enhancement of one recording.

    RTTM1 comes from ``rttm1`` or, failing that, from clustering
    ``embeddings``. With ``out_dir`` set, writes ``rttm1.rttm``,
    ``rttm2.rttm``, ``report.txt``/``report.json`` and one WAV per final
    segment. ``reference`` adds DER rows for both RTTMs to the report.
    """
    if rttm1 is None:
        if embeddings is None:
            raise DataError("no diarization source: provide RTTM1 or embeddings")
        rttm1 = rttm_from_embeddings(embeddings, config)
    rttm1 = sorted((s for s in rttm1 if s.recording_id == recording_id), key=lambda s: (s.onset, s.speaker_id))
    if config.passes < 1:
        raise DataError("track2 needs at least one GSS pass")
    current = list(rttm1)
    for _ in range(config.passes - 1):
        current = refine_pass(audio, current, recording_id, config, denoise_hook)
    rttm2 = current
    final = _enhanceable(rttm2, audio, config.gss)
    outs = enhance_segments(audio, rttm2, final, config.gss, recording_id) if final else []
    outputs = {_segment_name(s): o for s, o in zip(final, outs)}

    info = {
        "recording": recording_id,
        "passes": config.passes,
        "rttm1_segments": len(rttm1),
        "rttm2_segments": len(rttm2),
        "rttm1_speech_s": round(sum(s.duration for s in rttm1), 6),
        "rttm2_speech_s": round(sum(s.duration for s in rttm2), 6),
    }
    rep = SessionReport(info=info)
    if reference:
        ref = [s for s in reference if s.recording_id == recording_id]
        rep.der_rows.append(("rttm1", der(ref, rttm1, collar=config.collar)))
        rep.der_rows.append(("rttm2", der(ref, rttm2, collar=config.collar)))
    result = Track2Result(rttm1, rttm2, outputs, rep)
    if out_dir is not None:
        out_dir = Path(out_dir)
        atomic_write_text(out_dir / "rttm1.rttm", serialize_rttm(rttm1))
        atomic_write_text(out_dir / "rttm2.rttm", serialize_rttm(rttm2))
        for name, o in outputs.items():
            write_wav(out_dir / "segments" / f"{name}.wav", o)
        atomic_write_text(out_dir / "report.txt", rep.to_text())
        atomic_write_text(out_dir / "report.json", rep.to_json())
    return result
