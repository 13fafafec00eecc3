"""Run artifacts on disk: one JSON report plus two CSV views."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from ..metrics import METRIC_NAMES, MetricsReport
from .events import EventLog

REPORT_FILE = "report.json"
EVENTS_FILE = "events.csv"
METRICS_FILE = "metrics.csv"

# metrics.csv value for a metric whose denominator was empty
UNDEFINED = "undefined"


def write_report(log: EventLog, metrics: MetricsReport, out_dir: str | Path) -> Path:
    """Write report.json (authoritative) plus events.csv and metrics.csv views."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    payload = metrics.as_dict()
    payload["events"] = log.to_obj()
    (root / REPORT_FILE).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    with open(root / EVENTS_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "t", "data"])
        for ev in log:
            writer.writerow([ev.kind, repr(ev.t), json.dumps(ev.data, sort_keys=True)])

    with open(root / METRICS_FILE, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name in METRIC_NAMES:
            value = getattr(metrics, name)
            writer.writerow([name, UNDEFINED if value is None else repr(value)])

    return root / REPORT_FILE


def load_report(path: str | Path) -> tuple[EventLog, MetricsReport]:
    """Read back a report.json (or the directory holding one)."""
    p = Path(path)
    if p.is_dir():
        p = p / REPORT_FILE
    payload = json.loads(p.read_text(encoding="utf-8"))
    log = EventLog.from_obj(payload["events"])
    metrics = MetricsReport.from_dict(payload)
    return log, metrics


def format_metrics(metrics: MetricsReport) -> str:
    """Human-readable one-metric-per-line summary."""
    lines = []
    for name in METRIC_NAMES:
        value = getattr(metrics, name)
        lines.append(f"{name:>16}  {UNDEFINED if value is None else f'{value:.4f}'}")
    counts = " ".join(f"{k}={v}" for k, v in sorted(metrics.counts.items()))
    lines.append(f"{'counts':>16}  {counts}")
    return "\n".join(lines)


__all__ = [
    "EVENTS_FILE",
    "METRICS_FILE",
    "REPORT_FILE",
    "UNDEFINED",
    "format_metrics",
    "load_report",
    "write_report",
]
