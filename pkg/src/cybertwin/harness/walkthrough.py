"""The single-end walkthrough: attach, fetch, two handoffs, migration, switch.

Topology (one-way latencies)::

    ap1 ─5ms─┐            ┌─5ms─ ap3
    ap2 ─5ms─ e1 ──10ms── e2
              │20ms        │20ms
              c1 ──10ms── c2

Service ``video`` has a replica on ``e1`` and its origin on ``c1``; service
``archive`` lives on ``c1`` only. The end attaches at ``ap1``, requests both,
moves to ``ap2`` (same edge) and then to ``ap3`` (other edge), which puts its
twin 15 ms away and triggers a migration to ``e2``.

Hand-traced first-byte latencies with ``tx`` the per-chunk transmit time of
the first source:

* video from ``e1``: request reaches the twin at +0, chunk 0 lands at
  ``2*0 + tx`` at the twin and ``+5`` ms later at the end, so first byte is
  ``2*5 = 10`` ms after the transmit time is discounted.
* archive from ``c1``: the fetch leg is ``2*20``, plus ``2*5`` on the access
  link, so first byte is ``50`` ms.
"""

from __future__ import annotations

from ..model import Link, Node, NodeKind, ResourceVector, ServiceDescriptor, Topology
from .scenario import ScenarioConfig
from .workload import WorkloadEvent, WorkloadSpec

CHUNK = 65536
VIDEO_CHUNKS = 8
ARCHIVE_CHUNKS = 40
EXPECTED_FIRST_BYTE_MS = {"video": 10.0, "archive": 50.0}
HORIZON_S = 3.0

# step -> trace (actor, action) that marks it, in the order they must appear
STEPS = (
    ("attach", ("end", "attach")),
    ("service", ("cloudos", "place")),
    ("handoff", ("end", "handoff")),
    ("remote_twin", ("end", "remote_twin")),
    ("migrate", ("twin", "migrate")),
    ("select_best", ("end", "select_best")),
)


def topology() -> Topology:
    cap = ResourceVector(1000, 1000, 1000)
    none = ResourceVector(0, 0, 0)
    nodes = [
        Node("ap1", NodeKind.ACCESS_POINT, "telecom-op", none),
        Node("ap2", NodeKind.ACCESS_POINT, "telecom-op", none),
        Node("ap3", NodeKind.ACCESS_POINT, "telecom-op", none),
        Node("e1", NodeKind.EDGE_CLOUD, "cloud-op", cap),
        Node("e2", NodeKind.EDGE_CLOUD, "cloud-op", cap),
        Node("c1", NodeKind.CORE_CLOUD, "cloud-op", cap),
        Node("c2", NodeKind.CORE_CLOUD, "cloud-op", cap),
    ]
    core_bw = 3_276_800.0  # 50 chunks/s
    links = [
        Link("ap1", "e1", 5000, 1e9),
        Link("ap2", "e1", 5000, 1e9),
        Link("ap3", "e2", 5000, 1e9),
        Link("e1", "e2", 10000, 1e8),
        Link("e1", "c1", 20000, core_bw),
        Link("e2", "c2", 20000, core_bw),
        Link("c1", "c2", 10000, 1e9),
    ]
    return Topology(nodes, links, {"alice": "ap1"})


def services() -> tuple:
    return (
        ServiceDescriptor("video", ("e1", "c1"), VIDEO_CHUNKS * CHUNK, origin="c1"),
        ServiceDescriptor("archive", ("c1",), ARCHIVE_CHUNKS * CHUNK, origin="c1"),
    )


def script() -> tuple:
    return (
        WorkloadEvent(0, "alice", "attach", "ap1"),
        WorkloadEvent(10_000, "alice", "request", None, "video", VIDEO_CHUNKS * CHUNK),
        WorkloadEvent(100_000, "alice", "request", None, "archive", ARCHIVE_CHUNKS * CHUNK),
        WorkloadEvent(300_000, "alice", "handoff", "ap2"),
        WorkloadEvent(500_000, "alice", "handoff", "ap3"),
    )


def config(seed: int = 0) -> ScenarioConfig:
    spec = WorkloadSpec(seed=seed, n_ends=1, horizon_s=HORIZON_S, chunk_size=CHUNK)
    return ScenarioConfig(spec, topology=topology(), services=services(), script=script())


def step_times(trace) -> dict:
    """First trace time of each step, or None if it never happened."""
    out = {}
    for step, key in STEPS:
        out[step] = next((r.time for r in trace if (r.actor, r.action) == key), None)
    return out


def steps_in_order(trace) -> bool:
    """True if every step happened and their first occurrences are ordered."""
    marks = []
    for step, key in STEPS:
        idx = next((i for i, r in enumerate(trace) if (r.actor, r.action) == key), None)
        if idx is None:
            return False
        marks.append(idx)
    return marks == sorted(marks)
