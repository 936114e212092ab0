"""Frame-quantised diarization error rate with collar and optimal mapping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import DataError
from .rttm import Segment, by_recording

_EPS = 1e-9


@dataclass
class DerReport:
    missed_speech: float  # seconds
    false_alarm: float
    speaker_confusion: float
    total_speech: float  # scored reference speech, seconds
    speaker_map: Dict[str, Dict[str, str]] = field(default_factory=dict)

    @property
    def missed_pct(self) -> float:
        return 100.0 * self.missed_speech / self.total_speech

    @property
    def false_alarm_pct(self) -> float:
        return 100.0 * self.false_alarm / self.total_speech

    @property
    def confusion_pct(self) -> float:
        return 100.0 * self.speaker_confusion / self.total_speech

    @property
    def der(self) -> float:
        return self.missed_pct + self.false_alarm_pct + self.confusion_pct

    def as_dict(self) -> dict:
        return {
            "MS": self.missed_pct,
            "FA": self.false_alarm_pct,
            "SC": self.confusion_pct,
            "DER": self.der,
            "missed_speech_s": self.missed_speech,
            "false_alarm_s": self.false_alarm,
            "speaker_confusion_s": self.speaker_confusion,
            "total_speech_s": self.total_speech,
        }


def _frame_span(onset: float, end: float, resolution: float):
    """Frames whose centre lies in [onset, end)."""
    lo = math.ceil(onset / resolution - 0.5 - _EPS)
    hi = math.ceil(end / resolution - 0.5 - _EPS)
    return max(lo, 0), max(hi, 0)


def _raster(segs: Sequence[Segment], speakers: List[str], n: int, resolution: float) -> np.ndarray:
    out = np.zeros((len(speakers), n), dtype=bool)
    index = {s: i for i, s in enumerate(speakers)}
    for s in segs:
        lo, hi = _frame_span(s.onset, s.end, resolution)
        out[index[s.speaker_id], lo:min(hi, n)] = True
    return out


def _scored(ref: Sequence[Segment], n: int, collar: float, resolution: float) -> np.ndarray:
    scored = np.ones(n, dtype=bool)
    if collar <= 0:
        return scored
    for s in ref:
        for b in (s.onset, s.end):
            lo = math.floor((b - collar) / resolution - 0.5 + _EPS) + 1
            hi = math.ceil((b + collar) / resolution - 0.5 - _EPS)
            scored[max(lo, 0) : max(min(hi, n), 0)] = False
    return scored


def der(
    reference: Sequence[Segment],
    hypothesis: Sequence[Segment],
    collar: float = 0.25,
    resolution: float = 0.01,
) -> DerReport:
    if resolution <= 0:
        raise DataError("resolution must be positive")
    ref_by, hyp_by = by_recording(reference), by_recording(hypothesis)
    ms = fa = sc = total = 0
    mapping: Dict[str, Dict[str, str]] = {}
    for rec in sorted(set(ref_by) | set(hyp_by)):
        r, h = ref_by.get(rec, []), hyp_by.get(rec, [])
        end = max([s.end for s in r + h], default=0.0)
        n = int(math.ceil(end / resolution)) + 1
        r_spk = sorted({s.speaker_id for s in r})
        h_spk = sorted({s.speaker_id for s in h})
        R = _raster(r, r_spk, n, resolution)
        H = _raster(h, h_spk, n, resolution)
        scored = _scored(r, n, collar, resolution)
        R &= scored
        H &= scored
        n_ref = R.sum(axis=0)
        n_hyp = H.sum(axis=0)
        overlap = R.astype(np.int64) @ H.T.astype(np.int64)
        correct = 0
        mapping[rec] = {}
        if overlap.size:
            rows, cols = linear_sum_assignment(overlap, maximize=True)
            for i, j in zip(rows, cols):
                if overlap[i, j] > 0:
                    mapping[rec][h_spk[j]] = r_spk[i]
                correct += int(overlap[i, j])
        ms += int(np.maximum(n_ref - n_hyp, 0).sum())
        fa += int(np.maximum(n_hyp - n_ref, 0).sum())
        sc += int(np.minimum(n_ref, n_hyp).sum()) - correct
        total += int(n_ref.sum())
    if total == 0:
        raise DataError("reference contains no scored speech; DER undefined")
    return DerReport(ms * resolution, fa * resolution, sc * resolution, total * resolution, mapping)
