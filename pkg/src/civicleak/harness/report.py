"""Metrics report and its two file formats.

Both formats carry the same rows with columns ``record, phase, metric,
budget, value``. ``record`` is ``metric`` for a scalar (empty budget) or
``curve`` for one sample of a leak-vs-budget curve.
"""

from __future__ import annotations

import bisect
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

REPORT_FORMAT = "civicleak-report"
REPORT_VERSION = 1
COLUMNS = ("record", "phase", "metric", "budget", "value")

Scalar = int | float | str | None


@dataclass
class MetricsReport:
    scalars: dict[tuple[str, str], Scalar] = field(default_factory=dict)
    curves: dict[tuple[str, str], list[tuple[int, float]]] = field(default_factory=dict)

    def put(self, phase: str, metric: str, value: Scalar) -> None:
        self.scalars[(phase, metric)] = value

    def get(self, phase: str, metric: str, default: Scalar = None) -> Scalar:
        return self.scalars.get((phase, metric), default)

    def phase(self, phase: str) -> dict[str, Scalar]:
        return {m: v for (p, m), v in self.scalars.items() if p == phase}

    def put_curve(self, phase: str, metric: str, points: list[tuple[int, float]]) -> None:
        self.curves[(phase, metric)] = sorted(points)

    def rows(self) -> list[dict[str, Any]]:
        """Scalars in insertion order, then curve samples sorted by budget."""
        out = [{"record": "metric", "phase": p, "metric": m, "budget": None, "value": v}
               for (p, m), v in self.scalars.items()]
        for (p, m), pts in self.curves.items():
            out.extend({"record": "curve", "phase": p, "metric": m, "budget": b, "value": v}
                       for b, v in sorted(pts))
        return out

    @classmethod
    def from_rows(cls, rows) -> MetricsReport:
        r = cls()
        for row in rows:
            if row["record"] == "metric":
                r.scalars[(row["phase"], row["metric"])] = row["value"]
            elif row["record"] == "curve":
                r.curves.setdefault((row["phase"], row["metric"]), []).append((row["budget"], row["value"]))
            else:
                raise ValueError(f"unknown report record {row['record']!r}")
        for k in r.curves:
            r.curves[k].sort()
        return r


def sample_curve(hit_seqs: list[int], queries: int, total: int, samples: int = 50) -> list[tuple[int, float]]:
    """Leaked fraction of ``total`` after each of ``samples`` evenly spaced query budgets."""
    if queries <= 0 or total <= 0:
        return [(0, 0.0)]
    budgets = sorted({round(queries * k / (samples - 1)) for k in range(samples)})
    return [(b, bisect.bisect_left(hit_seqs, b) / total) for b in budgets]


def emit_report(report: MetricsReport, path: str | Path, fmt: str = "csv") -> Path:
    """Write ``report`` as ``csv`` or ``records`` (JSON lines with a header line)."""
    path = Path(path)
    rows = report.rows()
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in rows:
                w.writerow(["" if row[c] is None else row[c] for c in COLUMNS])
    elif fmt == "records":
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": REPORT_FORMAT, "version": REPORT_VERSION}) + "\n")
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def load_report(path: str | Path) -> MetricsReport:
    """Read a ``records`` report back."""
    with open(path, encoding="utf-8") as fh:
        head = json.loads(fh.readline() or "{}")
        if head.get("format") != REPORT_FORMAT or head.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report header {head!r}")
        rows = [json.loads(line) for line in fh if line.strip()]
    return MetricsReport.from_rows(rows)


def format_table(report: MetricsReport) -> str:
    """Human-readable scalar summary for the terminal."""
    lines = []
    width = max((len(p) + len(m) + 1 for p, m in report.scalars), default=0)
    for (p, m), v in report.scalars.items():
        shown = f"{v:.4f}" if isinstance(v, float) else ("-" if v is None else str(v))
        lines.append(f"{p + '.' + m:<{width}}  {shown}")
    return "\n".join(lines)
