"""External command hooks (ASR scorer, denoiser) and their in-process stand-ins.

A hook is either a :class:`HookSpec` describing a command line, or a plain
Python callable. Command hooks receive an input WAV via ``{in}`` and must
write their result to ``{out}``; anything else is a failure.
"""
from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Union

from .audio_io import read_wav, write_wav
from .dsp import AudioBuffer
from .errors import ConfigError, DataError, HookError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HookSpec:
    template: str
    timeout: float = 300.0
    expected_exit: int = 0

    def __post_init__(self):
        if "{in}" not in self.template or "{out}" not in self.template:
            raise ConfigError(f"hook template must contain {{in}} and {{out}}: {self.template!r}")
        if self.timeout <= 0:
            raise ConfigError("hook timeout must be positive")

    def argv(self, in_path, out_path) -> list:
        # substitute per token so paths with spaces survive
        return [tok.replace("{in}", str(in_path)).replace("{out}", str(out_path)) for tok in shlex.split(self.template)]


def run_hook(spec: HookSpec, in_path, out_path, env: Optional[Dict[str, str]] = None) -> None:
    argv = spec.argv(in_path, out_path)
    full_env = dict(os.environ, **(env or {}))
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=spec.timeout, env=full_env, check=False)
    except subprocess.TimeoutExpired:
        raise HookError(f"hook timed out after {spec.timeout:g}s: {argv[0]}") from None
    except OSError as exc:
        raise HookError(f"hook failed to start: {exc}") from exc
    if proc.returncode != spec.expected_exit:
        tail = proc.stderr.decode("utf-8", "replace").strip().splitlines()[-1:] or [""]
        raise HookError(f"hook exited with {proc.returncode} (expected {spec.expected_exit}): {tail[0]}")
    if not Path(out_path).exists():
        raise HookError(f"hook produced no output at {out_path}")


ScoreHook = Union[HookSpec, Callable[[Path, str, str], float]]
DenoiseHook = Union[HookSpec, Callable[[AudioBuffer], AudioBuffer]]


def score_audio(hook: ScoreHook, wav_path, utterance_id: str, tag: str) -> float:
    """Score one candidate; higher is better.

    Command hooks get ``CABINFRONT_UTTERANCE`` and ``CABINFRONT_TAG`` in the
    environment and write a single number to ``{out}``.
    """
    if not isinstance(hook, HookSpec):
        try:
            value = float(hook(Path(wav_path), utterance_id, tag))
        except HookError:
            raise
        except Exception as exc:
            raise HookError(f"score callable failed: {exc}") from exc
    else:
        with tempfile.TemporaryDirectory(prefix="cf-score-") as tmp:
            out = Path(tmp) / "score.txt"
            run_hook(hook, wav_path, out, {"CABINFRONT_UTTERANCE": utterance_id, "CABINFRONT_TAG": tag})
            text = out.read_text(encoding="utf-8").strip()
            try:
                value = float(text.split()[0])
            except (ValueError, IndexError):
                raise HookError(f"hook wrote a non-numeric score: {text[:40]!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise HookError(f"non-finite score {value} for {utterance_id}/{tag}")
    return value


def denoise_audio(hook: DenoiseHook, audio: AudioBuffer) -> AudioBuffer:
    if not isinstance(hook, HookSpec):
        try:
            out = hook(audio)
        except HookError:
            raise
        except Exception as exc:
            raise HookError(f"denoise callable failed: {exc}") from exc
    else:
        with tempfile.TemporaryDirectory(prefix="cf-denoise-") as tmp:
            src, dst = Path(tmp) / "in.wav", Path(tmp) / "out.wav"
            write_wav(src, audio)
            run_hook(hook, src, dst)
            try:
                out = read_wav(dst)
            except DataError as exc:
                raise HookError(f"denoise hook output unreadable: {exc}") from exc
    if out.sample_rate != audio.sample_rate or out.num_samples != audio.num_samples or out.channels != audio.channels:
        raise HookError("denoise hook changed the sample rate, length or channel count")
    return out
