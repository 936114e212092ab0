"""``cabinfront`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 hook error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import config as cfgmod
from .audio_io import atomic_write_text, read_wav, write_wav
from .denoise import GateConfig
from .diarization import (
    Segment,
    VadConfig,
    der,
    energy_vad,
    quantize_inward,
    read_embeddings,
    read_rttm,
    refine_rttm,
    serialize_rttm,
)
from .dsp import AudioBuffer, StftConfig
from .errors import CabinFrontError, ConfigError, DataError
from .gss import GssConfig, enhance_segments
from .hooks import HookSpec
from .iva import IvaConfig, iva_enhance
from .manifest import read_manifest
from .pipeline import AugmentConfig, Track2Config, augment_corpus, rttm_from_embeddings, track1_infer, track2_pipeline
from .report import SessionReport
from .rir import ScenePlacement, room_from_config, room_rirs, simulate_scene

log = logging.getLogger("cabinfront")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config -> dataclasses


def _stft(cfg: Dict[str, str]) -> StftConfig:
    s = cfgmod.section(cfg, "stft")
    base = StftConfig()
    return StftConfig(
        cfgmod.get_int(s, "window_length", base.window_length),
        cfgmod.get_int(s, "hop", base.hop),
        cfgmod.get_int(s, "fft_size", None),
        s.get("window", base.window),
    )


def gss_config(cfg: Dict[str, str], seed: int = 0) -> GssConfig:
    s = cfgmod.section(cfg, "gss")
    b = GssConfig()
    return GssConfig(
        stft=_stft(cfg),
        iterations=cfgmod.get_int(s, "iterations", b.iterations),
        epsilon=cfgmod.get_float(s, "epsilon", b.epsilon),
        context=cfgmod.get_float(s, "context", b.context),
        post_mask=cfgmod.get_bool(s, "post_mask", b.post_mask),
        mask_floor=cfgmod.get_float(s, "mask_floor", b.mask_floor),
        ref_channel=cfgmod.get_int(s, "ref_channel", b.ref_channel),
        loading=cfgmod.get_float(s, "loading", b.loading),
        activity_context=cfgmod.get_float(s, "activity_context", b.activity_context),
        seed=seed,
    )


def iva_config(cfg: Dict[str, str]) -> IvaConfig:
    s = cfgmod.section(cfg, "iva")
    b = IvaConfig()
    return IvaConfig(_stft(cfg), cfgmod.get_int(s, "iterations", b.iterations), cfgmod.get_int(s, "ref_channel", b.ref_channel))


def vad_config(cfg: Dict[str, str]) -> VadConfig:
    s = cfgmod.section(cfg, "vad")
    b = VadConfig()
    return VadConfig(
        frame=cfgmod.get_float(s, "frame", b.frame),
        energy_threshold_db=cfgmod.get_float(s, "energy_threshold_db", b.energy_threshold_db),
        hangover=cfgmod.get_int(s, "hangover", b.hangover),
        min_speech=cfgmod.get_float(s, "min_speech", b.min_speech),
        min_silence=cfgmod.get_float(s, "min_silence", b.min_silence),
        noise_window=cfgmod.get_float(s, "noise_window", b.noise_window),
        absolute_floor_db=cfgmod.get_float(s, "absolute_floor_db", b.absolute_floor_db),
    )


def track2_config(cfg: Dict[str, str], seed: int = 0) -> Track2Config:
    r = cfgmod.section(cfg, "refine")
    t = cfgmod.section(cfg, "track2")
    c = cfgmod.section(cfg, "cluster")
    g = cfgmod.section(cfg, "denoise")
    b = Track2Config()
    gb = GateConfig()
    gate = GateConfig(
        quantile=cfgmod.get_float(g, "quantile", gb.quantile),
        gain_floor=cfgmod.get_float(g, "gain_floor", gb.gain_floor),
        oversubtract=cfgmod.get_float(g, "oversubtract", gb.oversubtract),
    )
    return Track2Config(
        gss=gss_config(cfg, seed),
        vad=vad_config(cfg),
        gate=gate,
        min_dur=cfgmod.get_float(r, "min_dur", b.min_dur),
        gap_merge=cfgmod.get_float(r, "gap_merge", b.gap_merge),
        passes=cfgmod.get_int(t, "passes", b.passes),
        max_speakers=cfgmod.get_int(c, "max_speakers", b.max_speakers),
        cluster_p=cfgmod.get_float(c, "p", b.cluster_p),
        seed=seed,
        collar=cfgmod.get_float(cfgmod.section(cfg, "der"), "collar", b.collar),
    )


def augment_config(cfg: Dict[str, str]) -> AugmentConfig:
    s = cfgmod.section(cfg, "augment")
    b = AugmentConfig()
    snr = cfgmod.get_floats(s, "snr_range", b.snr_range)
    if len(snr) != 2:
        raise ConfigError("augment.snr_range needs two numbers")
    return AugmentConfig(
        snr_range=tuple(snr),
        speed_factors=cfgmod.get_floats(s, "speed_factors", b.speed_factors),
        music_filter=cfgmod.get_bool(s, "music_filter", b.music_filter),
        energy_threshold_db=cfgmod.get_float(s, "energy_threshold_db", b.energy_threshold_db),
        keep_clean=cfgmod.get_bool(s, "keep_clean", b.keep_clean),
        wav_format=s.get("wav_format", b.wav_format),
    )


def _hook(template: Optional[str], timeout: float) -> Optional[HookSpec]:
    return HookSpec(template, timeout) if template else None


def _stem(path) -> str:
    return Path(path).stem


# ---------------------------------------------------------------------------
# subcommands


def cmd_rir(args, cfg):
    room, placement = room_from_config(cfgmod.section(cfg, "room") or cfg)
    out = Path(args.out_dir)
    for s, row in enumerate(room_rirs(room, placement)):
        for m, h in enumerate(row):
            write_wav(out / f"rir_s{s}_m{m}.wav", AudioBuffer(h.taps[None], room.sample_rate))
    print(f"wrote {len(placement.sources) * len(placement.microphones)} impulse responses to {out}")


def cmd_simulate(args, cfg):
    room, placement = room_from_config(cfgmod.section(cfg, "room") or cfg)
    dry = [read_wav(p) for p in args.dry]
    if len(dry) > len(placement.sources):
        raise DataError(f"{len(dry)} dry signals but only {len(placement.sources)} source positions")
    place = ScenePlacement(placement.sources[: len(dry)], placement.microphones)
    write_wav(args.out, simulate_scene(room, place, dry))


def cmd_augment(args, cfg):
    room, placement = room_from_config(cfgmod.section(cfg, "room"))
    entries = read_manifest(args.manifest)
    noise = [read_wav(p) for p in args.noise]
    out = augment_corpus(
        entries,
        args.out_dir,
        room,
        placement,
        noise,
        augment_config(cfg),
        seed=args.seed,
        workers=args.workers,
        base=Path(args.manifest).parent,
    )
    print(f"{len(out)} of {len(entries)} entries written to {args.out_dir}")


def cmd_gss(args, cfg):
    audio = read_wav(args.audio)
    rttm = read_rttm(args.rttm)
    rec = args.recording or _stem(args.audio)
    segs = read_rttm(args.segments) if args.segments else rttm
    segs = [s for s in segs if s.recording_id == rec]
    if not segs:
        raise DataError(f"no segments for recording {rec!r}")
    outs = enhance_segments(audio, rttm, segs, gss_config(cfg, args.seed), rec)
    for s, o in zip(segs, outs):
        name = f"{s.recording_id}-{s.speaker_id}-{int(round(s.onset * 1000))}-{int(round(s.end * 1000))}.wav"
        write_wav(Path(args.out_dir) / name, o)
    print(f"enhanced {len(segs)} segments")


def cmd_iva(args, cfg):
    audio = read_wav(args.audio)
    for i, o in enumerate(iva_enhance(audio, iva_config(cfg))):
        write_wav(Path(args.out_dir) / f"{_stem(args.audio)}-iva{i}.wav", o)


def cmd_vad(args, cfg):
    audio = read_wav(args.audio)
    if audio.channels > 1:
        audio = audio.channel(args.channel)
    rec = args.recording or _stem(args.audio)
    segs = [Segment(rec, round(on, 2), round(d, 2), "speech") for on, d in energy_vad(audio, vad_config(cfg))]
    _emit(args.out, serialize_rttm([s for s in segs if s.duration > 0]))


def cmd_cluster(args, cfg):
    emb = read_embeddings(args.embeddings)
    _emit(args.out, serialize_rttm(rttm_from_embeddings(emb, track2_config(cfg, args.seed))))


def cmd_der(args, cfg):
    collar = args.collar if args.collar is not None else cfgmod.get_float(cfg, "der.collar", 0.25)
    rep = der(read_rttm(args.ref), read_rttm(args.hyp), collar=collar)
    sr = SessionReport([(_stem(args.hyp), rep)])
    print(sr.to_text(), end="")
    if args.json:
        atomic_write_text(args.json, sr.to_json())


def cmd_refine(args, cfg):
    r = cfgmod.section(cfg, "refine")
    regions: Dict[str, list] = {}
    for s in read_rttm(args.vad):
        regions.setdefault(s.recording_id, []).append((s.onset, s.duration))
    out = quantize_inward(
        refine_rttm(
            read_rttm(args.rttm), regions, cfgmod.get_float(r, "min_dur", 0.1), cfgmod.get_float(r, "gap_merge", 0.3)
        )
    )
    _emit(args.out, serialize_rttm(out))


def cmd_track1(args, cfg):
    hook = _hook(args.hook_asr, args.hook_timeout)
    if hook is None:
        raise ConfigError("track1 needs --hook-asr")
    sel = track1_infer(
        read_manifest(args.manifest),
        read_rttm(args.rttm),
        hook,
        args.out_dir,
        gss_config(cfg, args.seed),
        iva_config(cfg),
        workers=args.workers,
        base=Path(args.manifest).parent,
        use_iva=not args.no_iva,
    )
    unscored = sum(not s.scored for s in sel)
    print(f"{len(sel)} utterances, {unscored} unscored")


def cmd_track2(args, cfg):
    audio = read_wav(args.audio)
    rec = args.recording or _stem(args.audio)
    rttm1 = read_rttm(args.rttm) if args.rttm else None
    emb = read_embeddings(args.embeddings) if args.embeddings else None
    ref = read_rttm(args.reference) if args.reference else None
    res = track2_pipeline(
        audio,
        rec,
        args.out_dir,
        rttm1=rttm1,
        embeddings=emb,
        denoise_hook=_hook(args.hook_denoise, args.hook_timeout),
        config=track2_config(cfg, args.seed),
        reference=ref,
    )
    print(res.report.to_text(), end="")


def cmd_report(args, cfg):
    collar = cfgmod.get_float(cfg, "der.collar", 0.25)
    rows = []
    if args.hyp:
        if not args.ref:
            raise ConfigError("--hyp needs --ref")
        ref = read_rttm(args.ref)
        for spec in args.hyp:
            name, _, path = spec.partition("=")
            if not path:
                name, path = _stem(spec), spec
            rows.append((name, der(ref, read_rttm(path), collar=collar)))
    sdr: Dict[str, List[float]] = {}
    for path in args.scores or []:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                for tag, v in rec.get("scores", {}).items():
                    sdr.setdefault(tag, []).append(float(v))
    sr = SessionReport(rows, {k: sdr[k] for k in sorted(sdr)})
    print(sr.to_text(), end="")
    if args.json:
        atomic_write_text(args.json, sr.to_json())


def _emit(path: Optional[str], text: str) -> None:
    if path and path != "-":
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--hook-asr", help="scoring command, e.g. 'asr-score {in} {out}'")
    common.add_argument("--hook-denoise", help="denoising command, e.g. 'denoise {in} {out}'")
    common.add_argument("--hook-timeout", type=float, default=300.0)
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="cabinfront", description="In-car multi-channel speech front-end tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("rir", cmd_rir, "write image-source impulse responses as WAV")
    sp.add_argument("--out-dir", required=True)
    sp = add("simulate", cmd_simulate, "simulate a far-field scene from dry sources")
    sp.add_argument("--dry", action="append", required=True, help="mono close-talk WAV, one per source")
    sp.add_argument("--out", required=True)
    sp = add("augment", cmd_augment, "build a simulated far-field training corpus")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--noise", action="append", required=True, help="multi-channel noise WAV (repeatable)")
    sp.add_argument("--out-dir", required=True)
    sp = add("gss", cmd_gss, "guided source separation of RTTM segments")
    sp.add_argument("--audio", required=True)
    sp.add_argument("--rttm", required=True)
    sp.add_argument("--segments", help="RTTM of segments to enhance (default: all of --rttm)")
    sp.add_argument("--recording")
    sp.add_argument("--out-dir", required=True)
    sp = add("iva", cmd_iva, "blind separation with AuxIVA")
    sp.add_argument("--audio", required=True)
    sp.add_argument("--out-dir", required=True)
    sp = add("vad", cmd_vad, "energy VAD; writes speech regions as RTTM")
    sp.add_argument("--audio", required=True)
    sp.add_argument("--channel", type=int, default=0)
    sp.add_argument("--recording")
    sp.add_argument("--out")
    sp = add("cluster", cmd_cluster, "spectral clustering of ingested embeddings into RTTM")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--out")
    sp = add("der", cmd_der, "score a hypothesis RTTM")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--collar", type=float)
    sp.add_argument("--json")
    sp = add("refine", cmd_refine, "trim RTTM turns to VAD speech regions")
    sp.add_argument("--rttm", required=True)
    sp.add_argument("--vad", required=True, help="RTTM of speech regions")
    sp.add_argument("--out")
    sp = add("track1", cmd_track1, "GSS/IVA enhancement with score-based selection")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--rttm", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--no-iva", action="store_true")
    sp = add("track2", cmd_track2, "two-pass diarization-guided enhancement")
    sp.add_argument("--audio", required=True)
    sp.add_argument("--rttm", help="first-pass RTTM")
    sp.add_argument("--embeddings", help="embedding container, clustered when --rttm is absent")
    sp.add_argument("--reference", help="reference RTTM for DER rows in the report")
    sp.add_argument("--recording")
    sp.add_argument("--out-dir", required=True)
    sp = add("report", cmd_report, "DER table and score summaries")
    sp.add_argument("--ref")
    sp.add_argument("--hyp", action="append", help="NAME=PATH or PATH (repeatable)")
    sp.add_argument("--scores", action="append", help="selection.jsonl from track1 (repeatable)")
    sp.add_argument("--json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = cfgmod.load_kv(args.config) if args.config else {}
        args.func(args, cfg)
    except CabinFrontError as exc:
        print(f"cabinfront {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
