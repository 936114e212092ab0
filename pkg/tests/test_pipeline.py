import json

import numpy as np
import pytest
from scipy import stats

from cabinfront.audio_io import read_wav, write_wav
from cabinfront.diarization import DerReport, Segment, VadConfig, read_rttm
from cabinfront.dsp import AudioBuffer, StftConfig
from cabinfront.errors import DataError, HookError
from cabinfront.gss import GssConfig
from cabinfront.iva import IvaConfig
from cabinfront.manifest import ManifestEntry, read_manifest
from cabinfront.pipeline import (
    AugmentConfig,
    Track2Config,
    augment_corpus,
    select_candidate,
    track1_infer,
    track2_pipeline,
)
from cabinfront.report import REPORT_SCHEMA, format_der_row, report
from cabinfront.rir import RoomSpec, cabin_preset
from cabinfront.synth import cabin_scene, speech_like

FS = 16000
ROOM = RoomSpec(absorption=0.6, max_order=3)
_, PLACE = cabin_preset()
FAST_GSS = GssConfig(stft=StftConfig(512, 128), iterations=8)


def noise_pool(rng, n=3, seconds=0.5):
    return [AudioBuffer(rng.normal(size=(4, int(seconds * FS))), FS) for _ in range(n)]


def clean_corpus(tmp_path, rng, n, seconds=0.25):
    entries = []
    for i in range(n):
        name = f"u{i:04d}.wav"
        write_wav(tmp_path / "in" / name, AudioBuffer(speech_like(rng, seconds, FS)[None], FS))
        entries.append(ManifestEntry(f"u{i:04d}", name, speaker="s", transcription="t"))
    return entries


# ---------------------------------------------------------------------------
# augmentation


def test_augment_empty_manifest(tmp_path):
    assert augment_corpus([], tmp_path, ROOM, PLACE, []) == []


def test_augment_snr_distribution_and_metadata(tmp_path, rng):
    entries = clean_corpus(tmp_path, rng, 1000, seconds=0.1)
    cfg = AugmentConfig(snr_range=(0.0, 10.0), speed_factors=(1.0,), music_filter=False, keep_clean=True)
    out = augment_corpus(entries, tmp_path / "out", ROOM, PLACE, noise_pool(rng), cfg, seed=7, workers=4, base=tmp_path / "in")
    assert len(out) == 1000
    measured = []
    for e in out[:200]:
        mixed = read_wav(tmp_path / "out" / e.path).samples
        clean = read_wav(tmp_path / "out" / e.extra["clean_path"]).samples
        snr = 10 * np.log10(np.sum(clean**2) / np.sum((mixed - clean) ** 2))
        assert abs(snr - e.extra["snr_db"]) < 0.01
        measured.append(snr)
    drawn = np.array([e.extra["snr_db"] for e in out])
    assert drawn.min() >= 0.0 and drawn.max() <= 10.0
    assert stats.kstest(drawn, "uniform", args=(0.0, 10.0)).pvalue > 0.01
    back = read_manifest(tmp_path / "out" / "manifest.jsonl")
    assert [e.utterance_id for e in back] == [e.utterance_id for e in out]
    assert back[0].channels == (0, 1, 2, 3) and back[0].transcription == "t"


def test_augment_speed_ratios(tmp_path, rng):
    entries = clean_corpus(tmp_path, rng, 30, seconds=0.5)
    cfg = AugmentConfig(music_filter=False)
    out = augment_corpus(entries, tmp_path / "out", ROOM, PLACE, noise_pool(rng), cfg, seed=1, base=tmp_path / "in")
    n0 = int(0.5 * FS)
    seen = set()
    for e in out:
        n = read_wav(tmp_path / "out" / e.path).num_samples
        assert abs(n - n0 / e.extra["speed"]) <= 1
        seen.add(e.extra["speed"])
    assert seen == {0.9, 1.0, 1.1}


def test_augment_deterministic_across_workers_and_skips(tmp_path, rng):
    entries = clean_corpus(tmp_path, rng, 12)
    entries.append(ManifestEntry("missing", "nope.wav"))
    write_wav(tmp_path / "in" / "stereo.wav", AudioBuffer(np.zeros((2, 4000)) + 0.1, FS))
    entries.append(ManifestEntry("stereo", "stereo.wav"))
    pool = noise_pool(rng)
    cfg = AugmentConfig(music_filter=False)
    a = augment_corpus(entries, tmp_path / "a", ROOM, PLACE, pool, cfg, seed=3, workers=1, base=tmp_path / "in")
    b = augment_corpus(entries, tmp_path / "b", ROOM, PLACE, pool, cfg, seed=3, workers=4, base=tmp_path / "in")
    assert [e.utterance_id for e in a] == [f"u{i:04d}" for i in range(12)]
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (tmp_path / "b" / "manifest.jsonl").read_bytes()
    for e in a:
        assert (tmp_path / "a" / e.path).read_bytes() == (tmp_path / "b" / e.path).read_bytes()
    with pytest.raises(DataError):
        augment_corpus(entries, tmp_path / "c", ROOM, PLACE, [], base=tmp_path / "in")


def test_music_filter_drops_tonal_input(tmp_path):
    t = np.arange(FS) / FS
    chord = sum(np.sin(2 * np.pi * f * t) for f in (261.6, 329.6, 392.0)) / 3
    write_wav(tmp_path / "in" / "m.wav", AudioBuffer(chord[None], FS))
    out = augment_corpus(
        [ManifestEntry("m", "m.wav")], tmp_path / "out", ROOM, PLACE, noise_pool(np.random.default_rng(0)),
        AugmentConfig(flatness_band=(0.0, 0.1)), base=tmp_path / "in",
    )
    assert out == []


# ---------------------------------------------------------------------------
# Track I


def test_select_candidate():
    assert select_candidate({"gss": -1.0, "iva-0": -0.5}) == "iva-0"
    assert select_candidate({"gss": 1.0, "iva-0": 1.0, "iva-1": 1.0}) == "gss"
    assert select_candidate({}) == "gss"
    assert select_candidate({"iva-1": 2.0, "iva-0": 2.0}) == "iva-0"


@pytest.fixture(scope="module")
def session(tmp_path_factory):
    d = tmp_path_factory.mktemp("session")
    sc = cabin_scene(21, [[(0.2, 1.6)], [(1.4, 2.8)]], 3.0, snr_db=10.0, seats=(0, 3), room=ROOM, recording_id="rec")
    write_wav(d / "rec.wav", sc.mixture)
    return d, sc


def test_track1_hook_failures_fall_back_to_gss(session, tmp_path):
    d, sc = session
    entries = [ManifestEntry("u0", "rec.wav", onset=0.2, duration=1.4, speaker="spk0")]

    def broken(path, utt, tag):
        raise RuntimeError("asr down")

    sel = track1_infer(entries, sc.reference, broken, tmp_path, FAST_GSS, IvaConfig(StftConfig(512, 128), 5), base=d)
    assert sel[0].selected == "gss" and not sel[0].scored
    gss_only = read_wav(tmp_path / "candidates" / "u0.gss.wav").samples
    assert np.array_equal(read_wav(tmp_path / "u0.wav").samples, gss_only)
    rec = json.loads((tmp_path / "selection.jsonl").read_text())
    assert rec["selected"] == "gss" and rec["scores"] == {}

    # only iva-1 scores: it must be picked
    def partial(path, utt, tag):
        if tag != "iva-1":
            raise HookError("no")
        return 0.0

    sel = track1_infer(entries, sc.reference, partial, tmp_path, FAST_GSS, IvaConfig(StftConfig(512, 128), 5), base=d)
    assert sel[0].selected == "iva-1" and sel[0].scores == {"iva-1": 0.0}


def test_track1_needs_speaker(session, tmp_path):
    d, sc = session
    with pytest.raises(DataError):
        track1_infer([ManifestEntry("u", "rec.wav", duration=1.0)], sc.reference, lambda *a: 0.0, tmp_path, base=d)


# ---------------------------------------------------------------------------
# Track II


def test_track2_requires_a_source(session):
    _, sc = session
    with pytest.raises(DataError, match="no diarization source"):
        track2_pipeline(sc.mixture, "rec")


def test_track2_noop_refinement(session, tmp_path):
    _, sc = session
    # VAD that accepts everything: refinement must leave RTTM1 as is
    everything = VadConfig(energy_threshold_db=-1e9, absolute_floor_db=-1e9, min_silence=100.0)
    one = Track2Config(gss=FAST_GSS, vad=everything, passes=1)
    two = Track2Config(gss=FAST_GSS, vad=everything, passes=2)
    r1 = track2_pipeline(sc.mixture, "rec", rttm1=sc.reference, config=one)
    r2 = track2_pipeline(sc.mixture, "rec", tmp_path, rttm1=sc.reference, config=two, reference=sc.reference)
    key = lambda segs: [(s.onset, s.duration, s.speaker_id) for s in segs]
    assert key(r2.rttm2) == key(r2.rttm1) == key(sc.reference)
    assert r1.outputs.keys() == r2.outputs.keys()
    for name in r1.outputs:
        np.testing.assert_allclose(r2.outputs[name].samples, r1.outputs[name].samples, atol=1e-9)
    assert key(read_rttm(tmp_path / "rttm2.rttm")) == key(sc.reference)
    rep = json.loads((tmp_path / "report.json").read_text())
    assert [r["system"] for r in rep["diarization"]] == ["rttm1", "rttm2"]
    assert rep["diarization"][0]["DER"] == 0.0
    assert len(list((tmp_path / "segments").glob("*.wav"))) == 2


def test_track2_never_adds_speech_and_is_deterministic(session, tmp_path):
    _, sc = session
    padded = [Segment("rec", max(0.0, s.onset - 0.5), s.duration + 1.0, s.speaker_id) for s in sc.reference]
    cfg = Track2Config(gss=FAST_GSS)
    a = track2_pipeline(sc.mixture, "rec", tmp_path / "a", rttm1=padded, config=cfg)
    b = track2_pipeline(sc.mixture, "rec", tmp_path / "b", rttm1=padded, config=cfg)
    assert sum(s.duration for s in a.rttm2) <= sum(s.duration for s in a.rttm1) + 1e-9
    for f in ("rttm1.rttm", "rttm2.rttm", "report.txt", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_track2_denoise_hook_failure_falls_back(session, caplog):
    _, sc = session

    def broken(audio):
        raise RuntimeError("boom")

    cfg = Track2Config(gss=FAST_GSS)
    with_hook = track2_pipeline(sc.mixture, "rec", rttm1=sc.reference, denoise_hook=broken, config=cfg)
    plain = track2_pipeline(sc.mixture, "rec", rttm1=sc.reference, config=cfg)
    assert with_hook.rttm2 == plain.rttm2
    assert "built-in spectral gate" in caplog.text


# ---------------------------------------------------------------------------
# report


def test_report_rows_and_schema():
    jsonschema = pytest.importorskip("jsonschema")
    row = DerReport(3.0, 2.89, 0.26, 100.0)
    assert format_der_row(row) == "3.00 2.89 0.26 6.15"
    empty = report()
    assert empty.to_text().split("\n")[0].split() == ["system", "MS", "FA", "SC", "DER"]
    assert len([l for l in empty.to_text().splitlines() if l.strip()]) == 2
    rep = report([("V4", row)], {"gss": [1.0, 3.0, float("inf")]}, {"note": "x"})
    doc = json.loads(rep.to_json())
    jsonschema.validate(doc, REPORT_SCHEMA)
    jsonschema.validate(json.loads(empty.to_json()), REPORT_SCHEMA)
    assert doc["si_sdr"][0]["mean_db"] == 2.0 and doc["si_sdr"][0]["max_db"] == "inf"
    assert "V4" in rep.to_text() and "6.15" in rep.to_text()
