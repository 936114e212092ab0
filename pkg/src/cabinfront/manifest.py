"""JSON-lines utterance manifests."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .audio_io import atomic_write_text
from .errors import DataError


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    path: str
    channels: Optional[tuple] = None  # None selects every channel
    onset: float = 0.0
    duration: Optional[float] = None  # None runs to the end of the file
    speaker: Optional[str] = None
    transcription: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        rec = {
            "utterance_id": self.utterance_id,
            "path": self.path,
            "channels": list(self.channels) if self.channels is not None else None,
            "onset": self.onset,
            "duration": self.duration,
            "speaker": self.speaker,
            "transcription": self.transcription,
        }
        rec.update(self.extra)
        return json.dumps(rec, ensure_ascii=False)

    def resolve(self, base: Optional[Path]) -> Path:
        p = Path(self.path)
        return p if p.is_absolute() or base is None else base / p


_KNOWN = ("utterance_id", "path", "channels", "onset", "duration", "speaker", "transcription")


def _entry(rec: dict, where: str) -> ManifestEntry:
    if not isinstance(rec, dict):
        raise DataError(f"{where}: expected a JSON object")
    for key in ("utterance_id", "path"):
        if not isinstance(rec.get(key), str) or not rec[key]:
            raise DataError(f"{where}: missing or empty {key!r}")
    ch = rec.get("channels")
    if ch is not None:
        if not isinstance(ch, list) or not all(isinstance(c, int) and c >= 0 for c in ch):
            raise DataError(f"{where}: channels must be a list of non-negative integers")
        ch = tuple(ch)
    try:
        onset = float(rec.get("onset") or 0.0)
        dur = rec.get("duration")
        dur = None if dur is None else float(dur)
    except (TypeError, ValueError):
        raise DataError(f"{where}: onset/duration must be numbers") from None
    if onset < 0 or (dur is not None and dur <= 0):
        raise DataError(f"{where}: onset must be >= 0 and duration > 0")
    extra = {k: v for k, v in rec.items() if k not in _KNOWN}
    return ManifestEntry(
        rec["utterance_id"], rec["path"], ch, onset, dur, rec.get("speaker"), rec.get("transcription"), extra
    )


def parse_manifest(text: str, origin: str = "<manifest>") -> List[ManifestEntry]:
    out: List[ManifestEntry] = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        where = f"{origin}:{lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
        e = _entry(rec, where)
        if e.utterance_id in seen:
            raise DataError(f"{where}: duplicate utterance_id {e.utterance_id!r}")
        seen.add(e.utterance_id)
        out.append(e)
    return out


def read_manifest(path, check_paths: bool = True) -> List[ManifestEntry]:
    """Load a manifest; relative audio paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    entries = parse_manifest(text, str(path))
    if check_paths:
        for e in entries:
            if not e.resolve(path.parent).exists():
                raise DataError(f"{path}: audio for {e.utterance_id!r} not found: {e.path}")
    return entries


def serialize_manifest(entries: Iterable[ManifestEntry]) -> str:
    return "".join(e.to_json() + "\n" for e in entries)


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    atomic_write_text(path, serialize_manifest(entries))
