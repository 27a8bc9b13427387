"""Scenario-level aggregates and their JSON/CSV forms."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional


def mean(values) -> Optional[float]:
    values = list(values)
    return sum(values) / len(values) if values else None


def p95(values) -> Optional[float]:
    """Nearest-rank 95th percentile."""
    values = sorted(values)
    if not values:
        return None
    return values[max(0, math.ceil(0.95 * len(values)) - 1)]


@dataclass
class MetricsReport:
    mode: str
    seed: int
    n_ends: int
    horizon_ms: float
    requests: int = 0
    completed: int = 0
    rejected: int = 0
    mean_first_byte_ms: Optional[float] = None
    p95_first_byte_ms: Optional[float] = None
    mean_completion_ms: Optional[float] = None
    handoffs: int = 0
    mid_transfer_handoffs: int = 0
    mean_interruption_ms: Optional[float] = None
    migrations: int = 0
    core_table_size: int = 0
    edge_cache_sizes: dict = field(default_factory=dict)
    edge_distinct_resolved: dict = field(default_factory=dict)
    requested_chunks: int = 0
    delivered_chunks: int = 0
    availability: float = 1.0
    requested_bytes: int = 0
    delivered_bytes: int = 0
    retransmitted_bytes: int = 0
    duplicate_fetch_bytes: int = 0
    continuity_violations: int = 0
    ledger_totals: dict = field(default_factory=dict)
    ledger_drift: int = 0
    events: int = 0
    trace_records: int = 0
    determinism_hash: str = ""

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def availability(delivered: int, requested: int) -> float:
    return 1.0 if requested == 0 else delivered / requested


TIMESERIES_COLUMNS = ("t_s", "requests", "chunks_delivered", "handoffs", "migrations", "mean_first_byte_ms")


def timeseries_csv(deliveries, handoffs, migrations, horizon_us: int, bucket_us: int = 1_000_000) -> str:
    """Per-bucket counts; deliveries need ``issued_at``, ``first_byte_us``, ``land_times``."""
    n = max(1, -(-horizon_us // bucket_us))
    req = [0] * n
    landed = [0] * n
    hand = [0] * n
    mig = [0] * n
    fb = [[] for _ in range(n)]
    for d in deliveries:
        b = min(n - 1, d.issued_at // bucket_us)
        req[b] += 1
        if d.first_byte_us is not None:
            fb[b].append(d.first_byte_us / 1000)
        for t in d.land_times:
            if t <= horizon_us:
                landed[min(n - 1, t // bucket_us)] += 1
    for h in handoffs:
        hand[min(n - 1, h.t0 // bucket_us)] += 1
    for m in migrations:
        mig[min(n - 1, m.started_at // bucket_us)] += 1
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TIMESERIES_COLUMNS)
    for i in range(n):
        m = mean(fb[i])
        w.writerow([i * bucket_us / 1_000_000, req[i], landed[i], hand[i], mig[i],
                    "" if m is None else f"{m:.3f}"])
    return out.getvalue()


# rows rendered by the report command: (label, field, unit)
SUMMARY_ROWS = (
    ("requests", "requests", ""),
    ("completed", "completed", ""),
    ("first-byte latency (mean)", "mean_first_byte_ms", "ms"),
    ("first-byte latency (p95)", "p95_first_byte_ms", "ms"),
    ("completion time (mean)", "mean_completion_ms", "ms"),
    ("handoffs", "handoffs", ""),
    ("mid-transfer handoffs", "mid_transfer_handoffs", ""),
    ("handoff interruption (mean)", "mean_interruption_ms", "ms"),
    ("migrations", "migrations", ""),
    ("availability", "availability", ""),
    ("retransmitted bytes", "retransmitted_bytes", "B"),
    ("duplicate fetch bytes", "duplicate_fetch_bytes", "B"),
    ("core mapping table", "core_table_size", ""),
    ("ledger drift", "ledger_drift", ""),
)


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}" if abs(value) < 10 else f"{value:.2f}"
    return str(value)


def render_table(reports: dict) -> str:
    """Plain-text metric table.

    With two modes a delta column (first minus second) is added; the cybertwin
    model always comes first.
    """
    modes = sorted(reports, key=lambda m: (m != "cybertwin", m))
    head = ["metric"] + modes + (["delta"] if len(modes) == 2 else [])
    rows = [head]
    for label, key, unit in SUMMARY_ROWS:
        vals = [reports[m].get(key) for m in modes]
        row = [label + (f" [{unit}]" if unit else "")] + [_fmt(v) for v in vals]
        if len(modes) == 2:
            a, b = vals
            numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (a, b))
            row.append(_fmt(a - b) if numeric else "-")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = []
    for k, r in enumerate(rows):
        lines.append("  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r)))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
