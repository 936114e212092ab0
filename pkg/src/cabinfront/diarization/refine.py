"""VAD-driven boundary refinement of a diarization hypothesis."""
from __future__ import annotations

import logging
import math
from typing import Dict, Iterable, List, Sequence, Tuple

from .rttm import Segment

log = logging.getLogger(__name__)

Interval = Tuple[float, float]  # (start, end)


def union(intervals: Iterable[Interval]) -> List[Interval]:
    """Merge overlapping or touching intervals."""
    out: List[List[float]] = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def intersect(a: Sequence[Interval], b: Sequence[Interval]) -> List[Interval]:
    """Intersection of two sorted, disjoint interval lists."""
    out, i, j = [], 0, 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def refine_rttm(
    rttm1: Sequence[Segment],
    vad_regions: Dict[str, Sequence[Tuple[float, float]]],
    min_dur: float = 0.1,
    gap_merge: float = 0.3,
) -> List[Segment]:
    """Trim every speaker turn to the VAD speech regions of its recording.

    ``vad_regions`` maps recording id to ``(onset, duration)`` pairs. Within
    one (merged) input turn, VAD holes shorter than ``gap_merge`` are bridged;
    fragments shorter than ``min_dur`` are dropped. Output never extends
    beyond the input turns, so total speech time cannot grow.
    """
    turns: Dict[Tuple[str, str], List[Interval]] = {}
    channels: Dict[Tuple[str, str], str] = {}
    for s in rttm1:
        turns.setdefault((s.recording_id, s.speaker_id), []).append((s.onset, s.end))
        channels.setdefault((s.recording_id, s.speaker_id), s.channel)
    speech = {rec: union((on, on + dur) for on, dur in regs) for rec, regs in vad_regions.items()}
    out: List[Segment] = []
    for (rec, spk), ivs in sorted(turns.items()):
        merged = union(ivs)
        if rec not in speech:
            log.warning("no VAD regions for recording %s; keeping its turns", rec)
            kept = merged
        else:
            kept = []
            for turn in merged:
                frags = intersect([turn], speech[rec])
                bridged: List[List[float]] = []
                for a, b in frags:
                    if bridged and a - bridged[-1][1] < gap_merge:
                        bridged[-1][1] = b
                    else:
                        bridged.append([a, b])
                kept.extend((a, b) for a, b in bridged if b - a >= min_dur - 1e-12)
        ch = channels[(rec, spk)]
        out.extend(Segment(rec, a, b - a, spk, ch) for a, b in kept)
    out.sort(key=lambda s: (s.recording_id, s.onset, s.speaker_id))
    return out


def quantize_inward(segments: Iterable[Segment], step: float = 0.01) -> List[Segment]:
    """Snap boundaries inward to multiples of ``step``; drops collapsed turns."""
    out = []
    for s in segments:
        on = math.ceil(round(s.onset / step, 6)) * step
        end = math.floor(round(s.end / step, 6)) * step
        on, end = round(on, 6), round(end, 6)
        if end - on > step / 2:
            out.append(Segment(s.recording_id, on, round(end - on, 6), s.speaker_id, s.channel))
    return out
