"""NIST RTTM reading and writing (``SPEAKER`` lines only)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List

from ..errors import DataError

log = logging.getLogger(__name__)

__all__ = ["Segment", "parse_rttm", "serialize_rttm", "read_rttm", "by_recording", "speech_time"]


@dataclass(frozen=True, order=True)
class Segment:
    recording_id: str
    onset: float
    duration: float
    speaker_id: str
    channel: str = "1"

    @property
    def end(self) -> float:
        return self.onset + self.duration

    def __post_init__(self):
        if not (math.isfinite(self.onset) and math.isfinite(self.duration)):
            raise DataError(f"non-finite segment times: {self}")
        if self.onset < 0:
            raise DataError(f"negative onset {self.onset}")
        if self.duration <= 0:
            raise DataError(f"non-positive duration {self.duration}")


def parse_rttm(text: str) -> List[Segment]:
    segments = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            log.warning("rttm line %d: skipping %s record", lineno, fields[0])
            continue
        if len(fields) != 10:
            raise DataError(f"rttm line {lineno}: expected 10 fields, got {len(fields)}")
        try:
            onset, duration = float(fields[3]), float(fields[4])
        except ValueError:
            raise DataError(f"rttm line {lineno}: bad onset/duration {fields[3]!r} {fields[4]!r}") from None
        if duration < 0:
            raise DataError(f"rttm line {lineno}: negative duration {duration}")
        if duration == 0:
            log.warning("rttm line %d: skipping zero-length segment", lineno)
            continue
        try:
            segments.append(Segment(fields[1], onset, duration, fields[7], fields[2]))
        except DataError as exc:
            raise DataError(f"rttm line {lineno}: {exc}") from None
    return segments


def serialize_rttm(segments: Iterable[Segment]) -> str:
    lines = [
        f"SPEAKER {s.recording_id} {s.channel} {s.onset:.2f} {s.duration:.2f} <NA> <NA> {s.speaker_id} <NA> <NA>\n"
        for s in sorted(segments, key=lambda s: (s.recording_id, s.onset, s.speaker_id, s.duration))
    ]
    return "".join(lines)


def read_rttm(path) -> List[Segment]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_rttm(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def by_recording(segments: Iterable[Segment]) -> Dict[str, List[Segment]]:
    out: Dict[str, List[Segment]] = {}
    for s in segments:
        out.setdefault(s.recording_id, []).append(s)
    for v in out.values():
        v.sort(key=lambda s: (s.onset, s.speaker_id))
    return out


def speech_time(segments: Iterable[Segment]) -> float:
    """Total labelled speech, counting each speaker's overlapping segments once."""
    total = 0.0
    per_spk: Dict[tuple, List[Segment]] = {}
    for s in segments:
        per_spk.setdefault((s.recording_id, s.speaker_id), []).append(s)
    for segs in per_spk.values():
        segs.sort(key=lambda s: s.onset)
        cur_on, cur_end = segs[0].onset, segs[0].end
        for s in segs[1:]:
            if s.onset > cur_end:
                total += cur_end - cur_on
                cur_on, cur_end = s.onset, s.end
            else:
                cur_end = max(cur_end, s.end)
        total += cur_end - cur_on
    return total
