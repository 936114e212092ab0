import sys

import numpy as np
import pytest

from cabinfront.audio_io import read_wav, write_wav
from cabinfront.dsp import AudioBuffer
from cabinfront.errors import ConfigError, DataError, HookError
from cabinfront.hooks import HookSpec, denoise_audio, run_hook, score_audio
from cabinfront.manifest import ManifestEntry, parse_manifest, read_manifest, serialize_manifest, write_manifest

PY = sys.executable


def test_manifest_round_trip(tmp_path):
    entries = [
        ManifestEntry("u1", "a.wav", (0, 1), 0.5, 2.0, "spk", "hello", {"snr_db": 3.5}),
        ManifestEntry("u2", "b.wav"),
    ]
    back = parse_manifest(serialize_manifest(entries))
    assert back == entries and back[0].extra == {"snr_db": 3.5}
    (tmp_path / "a.wav").write_bytes(b"")
    write_manifest(tmp_path / "m.jsonl", entries)
    with pytest.raises(DataError, match="b.wav"):
        read_manifest(tmp_path / "m.jsonl")
    assert len(read_manifest(tmp_path / "m.jsonl", check_paths=False)) == 2


@pytest.mark.parametrize(
    "text, msg",
    [
        ('{"utterance_id": "a"}', ":1: missing"),
        ('{"utterance_id": "a", "path": "x"}\n{bad', ":2: invalid JSON"),
        ('{"utterance_id": "a", "path": "x"}\n\n{"utterance_id": "a", "path": "y"}', ":3: duplicate"),
        ('{"utterance_id": "a", "path": "x", "duration": -1}', "duration"),
        ('{"utterance_id": "a", "path": "x", "channels": [-1]}', "channels"),
    ],
)
def test_manifest_errors_carry_line(text, msg):
    with pytest.raises(DataError, match=msg):
        parse_manifest(text)


def test_hookspec_validation_and_argv():
    with pytest.raises(ConfigError):
        HookSpec("echo {in}")
    with pytest.raises(ConfigError):
        HookSpec("x {in} {out}", timeout=0)
    assert HookSpec("tool --in={in} {out}").argv("/a b/c.wav", "o.txt") == ["tool", "--in=/a b/c.wav", "o.txt"]


def test_command_score_hook(tmp_path):
    script = tmp_path / "score.py"
    script.write_text(
        "import os, sys\n"
        "open(sys.argv[2], 'w').write('-1.5' if os.environ['CABINFRONT_TAG'] == 'iva-0' else '2')\n"
    )
    hook = HookSpec(f"{PY} {script} {{in}} {{out}}", timeout=30)
    assert score_audio(hook, tmp_path / "x.wav", "u", "iva-0") == -1.5
    assert score_audio(hook, tmp_path / "x.wav", "u", "gss") == 2.0


def test_hook_failures(tmp_path):
    with pytest.raises(HookError, match="exited with 3"):
        run_hook(HookSpec(f"{PY} -c 'import sys; sys.exit(3)' {{in}} {{out}}"), "i", tmp_path / "o")
    with pytest.raises(HookError, match="no output"):
        run_hook(HookSpec(f"{PY} -c pass {{in}} {{out}}"), "i", tmp_path / "o")
    with pytest.raises(HookError, match="timed out"):
        run_hook(HookSpec(f"{PY} -c 'import time; time.sleep(5)' {{in}} {{out}}", timeout=0.3), "i", tmp_path / "o")
    with pytest.raises(HookError, match="failed to start"):
        run_hook(HookSpec("/nonexistent/tool {in} {out}"), "i", tmp_path / "o")
    with pytest.raises(HookError, match="non-finite"):
        score_audio(lambda p, u, t: float("nan"), "x", "u", "t")
    with pytest.raises(HookError, match="callable failed"):
        score_audio(lambda p, u, t: 1 / 0, "x", "u", "t")


def test_denoise_hooks(tmp_path, rng):
    audio = AudioBuffer(rng.uniform(-0.5, 0.5, size=(1, 800)), 16000)
    halve = tmp_path / "halve.py"
    halve.write_text(
        "import sys\nfrom cabinfront.audio_io import read_wav, write_wav\n"
        "a = read_wav(sys.argv[1]); write_wav(sys.argv[2], type(a)(a.samples * 0.5, a.sample_rate))\n"
    )
    out = denoise_audio(HookSpec(f"{PY} {halve} {{in}} {{out}}"), audio)
    np.testing.assert_allclose(out.samples, audio.samples * 0.5, atol=1e-6)
    assert denoise_audio(lambda a: a, audio) is audio
    with pytest.raises(HookError, match="length"):
        denoise_audio(lambda a: AudioBuffer(a.samples[:, :10], a.sample_rate), audio)
