"""Session reports: DER table plus SI-SDR summaries, as aligned text and JSON."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .diarization.der import DerReport

DER_COLUMNS = ("MS", "FA", "SC", "DER")

REPORT_SCHEMA = {
    "type": "object",
    "required": ["diarization", "si_sdr"],
    "additionalProperties": False,
    "properties": {
        "diarization": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["system", "MS", "FA", "SC", "DER", "total_speech_s"],
                "properties": {
                    "system": {"type": "string"},
                    "MS": {"type": "number", "minimum": 0},
                    "FA": {"type": "number", "minimum": 0},
                    "SC": {"type": "number", "minimum": 0},
                    "DER": {"type": "number", "minimum": 0},
                    "total_speech_s": {"type": "number", "minimum": 0},
                },
            },
        },
        "si_sdr": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["system", "count", "mean_db", "min_db", "max_db"],
                "properties": {
                    "system": {"type": "string"},
                    "count": {"type": "integer", "minimum": 0},
                    "mean_db": {"type": ["number", "string"]},
                    "min_db": {"type": ["number", "string"]},
                    "max_db": {"type": ["number", "string"]},
                },
            },
        },
        "info": {"type": "object"},
    },
}


def format_der_row(rep: DerReport) -> str:
    """``"MS FA SC DER"`` percentages with two decimals."""
    return " ".join(f"{v:.2f}" for v in (rep.missed_pct, rep.false_alarm_pct, rep.confusion_pct, rep.der))


def _json_db(v: float):
    # json has no infinities; keep them readable instead of failing
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


@dataclass
class SessionReport:
    der_rows: List[Tuple[str, DerReport]] = field(default_factory=list)
    si_sdr: Dict[str, List[float]] = field(default_factory=dict)
    info: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        rows = []
        for name, rep in self.der_rows:
            rows.append(
                {
                    "system": name,
                    "MS": round(rep.missed_pct, 6),
                    "FA": round(rep.false_alarm_pct, 6),
                    "SC": round(rep.confusion_pct, 6),
                    "DER": round(rep.der, 6),
                    "total_speech_s": round(rep.total_speech, 6),
                }
            )
        sdr = []
        for name in self.si_sdr:
            vals = self.si_sdr[name]
            finite = [v for v in vals if math.isfinite(v)]
            mean = math.fsum(finite) / len(finite) if finite else float("nan")
            sdr.append(
                {
                    "system": name,
                    "count": len(vals),
                    "mean_db": _json_db(round(mean, 6)) if finite else "nan",
                    "min_db": _json_db(min(vals)) if vals else "nan",
                    "max_db": _json_db(max(vals)) if vals else "nan",
                }
            )
        out = {"diarization": rows, "si_sdr": sdr}
        if self.info:
            out["info"] = self.info
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        width = max([len("system")] + [len(n) for n, _ in self.der_rows])
        lines = ["system".ljust(width) + "".join(c.rjust(8) for c in DER_COLUMNS)]
        for name, rep in self.der_rows:
            vals = format_der_row(rep).split()
            lines.append(name.ljust(width) + "".join(v.rjust(8) for v in vals))
        sw = max([len("system")] + [len(n) for n in self.si_sdr])
        lines.append("")
        lines.append("system".ljust(sw) + "count".rjust(7) + "mean_dB".rjust(10) + "min_dB".rjust(10) + "max_dB".rjust(10))
        for row in self.to_dict()["si_sdr"]:
            cells = [f"{v:.2f}" if isinstance(v, float) else str(v) for v in (row["mean_db"], row["min_db"], row["max_db"])]
            lines.append(row["system"].ljust(sw) + str(row["count"]).rjust(7) + "".join(c.rjust(10) for c in cells))
        return "\n".join(lines) + "\n"


def report(der_rows: Sequence[Tuple[str, DerReport]] = (), si_sdr: Dict[str, List[float]] = None, info=None) -> SessionReport:
    return SessionReport(list(der_rows), dict(si_sdr or {}), dict(info or {}))
