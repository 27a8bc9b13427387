"""Seeded workloads: grid topologies, service catalogs, mobility and requests."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from types import SimpleNamespace
from typing import NamedTuple, Optional

from .. import kernels
from ..errors import InvalidSpec
from ..model import Link, Node, NodeKind, ResourceVector, ServiceDescriptor, Topology, ms_to_us
from ..rng import Stream

MOBILITY_MODELS = ("waypoint", "static")


@dataclass(frozen=True)
class WorkloadSpec:
    """Everything needed to generate one scenario's event list.

    Latencies are in milliseconds, bandwidths in bytes per second, distances
    in metres and speeds in metres per second.
    """

    seed: int
    n_ends: int = 10
    horizon_s: float = 300.0
    field_m: tuple = (1000.0, 1000.0)
    ap_grid: tuple = (4, 4)
    edge_grid: tuple = (2, 2)
    n_cores: int = 2
    ap_edge_ms: float = 5.0
    edge_edge_ms: float = 10.0
    edge_core_ms: float = 20.0
    core_core_ms: float = 15.0
    access_bw: float = 125_000_000.0
    edge_edge_bw: float = 50_000_000.0
    edge_core_bw: float = 13_107_200.0
    core_core_bw: float = 125_000_000.0
    edge_egress_bw: float = 26_214_400.0
    edge_capacity: tuple = (400, 400, 400)
    core_capacity: tuple = (4000, 4000, 4000)
    mobility: str = "waypoint"
    speed_mps: tuple = (1.0, 15.0)
    pause_s: tuple = (0.0, 10.0)
    scan_ms: float = 100.0
    request_rate: float = 1 / 30  # per end per second
    size_chunks: tuple = (2, 16)
    n_services: int = 8
    edge_replica_prob: float = 0.5
    chunk_size: int = 65536

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(msg):
            raise InvalidSpec(msg)

        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            bad("seed is mandatory and must be an integer")
        if self.n_ends < 1:
            bad("n_ends must be >= 1")
        if self.horizon_s <= 0:
            bad("horizon_s must be > 0")
        if min(self.field_m) <= 0:
            bad("field_m must be positive")
        if min(self.ap_grid) < 1 or min(self.edge_grid) < 1:
            bad("grids need at least one cell")
        if self.edge_grid[0] > self.ap_grid[0] or self.edge_grid[1] > self.ap_grid[1]:
            bad("edge grid cannot be finer than the AP grid")
        if self.n_cores < 1:
            bad("n_cores must be >= 1")
        for name in ("ap_edge_ms", "edge_edge_ms", "edge_core_ms", "core_core_ms", "access_bw",
                     "edge_edge_bw", "edge_core_bw", "core_core_bw", "edge_egress_bw", "scan_ms"):
            if getattr(self, name) <= 0:
                bad(f"{name} must be > 0")
        if self.mobility not in MOBILITY_MODELS:
            bad(f"mobility must be one of {MOBILITY_MODELS}")
        lo, hi = self.speed_mps
        if self.mobility == "waypoint" and not 0 < lo <= hi:
            bad("speed_mps must satisfy 0 < low <= high")
        if not 0 <= self.pause_s[0] <= self.pause_s[1]:
            bad("pause_s must satisfy 0 <= low <= high")
        if self.request_rate < 0:
            bad("request_rate must be >= 0")
        if not 1 <= self.size_chunks[0] <= self.size_chunks[1]:
            bad("size_chunks must satisfy 1 <= low <= high")
        if self.n_services < 1:
            bad("n_services must be >= 1")
        if not 0 <= self.edge_replica_prob <= 1:
            bad("edge_replica_prob must be in [0, 1]")
        if self.chunk_size < 1:
            bad("chunk_size must be >= 1")

    @property
    def horizon_us(self) -> int:
        return int(round(self.horizon_s * 1_000_000))

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, data: dict) -> "WorkloadSpec":
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None


class WorkloadEvent(NamedTuple):
    time: int  # microseconds
    end: str
    op: str  # attach | handoff | request
    ap: Optional[str] = None
    service: Optional[str] = None
    nbytes: int = 0

    def to_json(self) -> dict:
        d = {"t_ms": self.time / 1000, "end": self.end, "op": self.op}
        if self.ap is not None:
            d["ap"] = self.ap
        if self.service is not None:
            d["service"] = self.service
            d["nbytes"] = self.nbytes
        return d

    @classmethod
    def from_json(cls, d: dict) -> "WorkloadEvent":
        return cls(ms_to_us(d["t_ms"]), d["end"], d["op"], d.get("ap"), d.get("service"), d.get("nbytes", 0))


@dataclass
class Workload:
    topology: Topology
    services: tuple
    ends: tuple
    events: list = field(default_factory=list)

    def requests(self) -> list:
        return [e for e in self.events if e.op == "request"]


def _cells(n: int, length: float) -> list:
    return [(i + 0.5) * length / n for i in range(n)]


_LAYOUT_FIELDS = ("field_m", "ap_grid", "edge_grid", "n_cores", "edge_capacity", "core_capacity",
                  "edge_egress_bw", "ap_edge_ms", "access_bw", "edge_edge_ms", "edge_edge_bw",
                  "edge_core_ms", "edge_core_bw", "core_core_ms", "core_core_bw")


def grid_topology(spec: WorkloadSpec) -> Topology:
    """APs on a uniform grid, each linked to the edge cloud covering its cell.

    Edge clouds form their own grid (neighbours linked), every edge links to
    every core, and the cores form a clique. Topologies are immutable, so runs
    with the same layout share one instance and its path tables.
    """
    return _grid_topology(tuple(getattr(spec, f) for f in _LAYOUT_FIELDS))


@functools.lru_cache(maxsize=32)
def _grid_topology(layout: tuple) -> Topology:
    spec = SimpleNamespace(**dict(zip(_LAYOUT_FIELDS, layout)))
    fx, fy = spec.field_m
    (ax, ay), (ex, ey) = spec.ap_grid, spec.edge_grid
    nodes, links = [], []
    edge_cap = ResourceVector(*spec.edge_capacity)
    core_cap = ResourceVector(*spec.core_capacity)
    edges = {}
    for j, y in enumerate(_cells(ey, fy)):
        for i, x in enumerate(_cells(ex, fx)):
            eid = f"e{j}{i}"
            edges[(i, j)] = eid
            nodes.append(Node(eid, NodeKind.EDGE_CLOUD, "cloud-op", edge_cap, (x, y), spec.edge_egress_bw))
    for (i, j), eid in edges.items():
        for di, dj in ((1, 0), (0, 1)):
            other = edges.get((i + di, j + dj))
            if other:
                links.append(Link(eid, other, ms_to_us(spec.edge_edge_ms), spec.edge_edge_bw))
    cores = [f"c{k}" for k in range(spec.n_cores)]
    for k, cid in enumerate(cores):
        nodes.append(Node(cid, NodeKind.CORE_CLOUD, "cloud-op", core_cap, None, None))
        for eid in edges.values():
            links.append(Link(eid, cid, ms_to_us(spec.edge_core_ms), spec.edge_core_bw))
        for other in cores[k + 1:]:
            links.append(Link(cid, other, ms_to_us(spec.core_core_ms), spec.core_core_bw))
    for j, y in enumerate(_cells(ay, fy)):
        for i, x in enumerate(_cells(ax, fx)):
            aid = f"ap{j:02d}{i:02d}"
            nodes.append(Node(aid, NodeKind.ACCESS_POINT, "telecom-op", ResourceVector(0, 0, 0), (x, y), None))
            edge = edges[(i * ex // ax, j * ey // ay)]
            links.append(Link(aid, edge, ms_to_us(spec.ap_edge_ms), spec.access_bw))
    return Topology(nodes, links)


def service_catalog(spec: WorkloadSpec, topology: Topology) -> tuple:
    """Services with one core origin and a random subset of edge replicas."""
    rng = Stream.from_seed(spec.seed, "services")
    cores = topology.core_clouds
    edges = topology.edge_clouds
    out = []
    for k in range(spec.n_services):
        origin = cores[k % len(cores)]
        replicas = [origin] + [e for e in edges if rng.random() < spec.edge_replica_prob]
        out.append(ServiceDescriptor(f"svc{k}", tuple(replicas), spec.size_chunks[1] * spec.chunk_size,
                                     origin=origin))
    return tuple(out)


def waypoint_knots(spec: WorkloadSpec, rng: Stream):
    """Random-waypoint trajectory as integer-microsecond knots."""
    fx, fy = spec.field_m
    horizon = spec.horizon_us
    x, y = rng.uniform(0, fx), rng.uniform(0, fy)
    ts, xs, ys = [0], [x], [y]
    if spec.mobility == "static":
        return ts, xs, ys
    t = 0
    while t < horizon:
        pause = int(rng.uniform(*spec.pause_s) * 1_000_000)
        if pause > 0:
            t += pause
            ts.append(t)
            xs.append(x)
            ys.append(y)
        nx, ny = rng.uniform(0, fx), rng.uniform(0, fy)
        speed = rng.uniform(*spec.speed_mps)
        travel = max(1, int(math.hypot(nx - x, ny - y) / speed * 1_000_000))
        t += travel
        x, y = nx, ny
        ts.append(t)
        xs.append(x)
        ys.append(y)
    return ts, xs, ys


def mobility_events(spec: WorkloadSpec, topology: Topology, end: str) -> list:
    aps = topology.access_points
    pos = [topology.node(a).position for a in aps]
    if any(p is None for p in pos):
        raise InvalidSpec("mobility needs a position on every access point")
    rng = Stream.from_seed(spec.seed, f"mobility/{end}")
    ts, xs, ys = waypoint_knots(spec, rng)
    times, idx = kernels.association_changes(ts, xs, ys, [p[0] for p in pos], [p[1] for p in pos],
                                             ms_to_us(spec.scan_ms), spec.horizon_us)
    events = [WorkloadEvent(times[0], end, "attach", aps[idx[0]])]
    events.extend(WorkloadEvent(t, end, "handoff", aps[i]) for t, i in zip(times[1:], idx[1:]))
    return events


def request_events(spec: WorkloadSpec, services: tuple, end: str) -> list:
    """Poisson arrivals with uniform service choice and uniform size in chunks."""
    if spec.request_rate == 0:
        return []
    rng = Stream.from_seed(spec.seed, f"requests/{end}")
    horizon = spec.horizon_us
    out = []
    t = 0.0
    lo, hi = spec.size_chunks
    while True:
        t += rng.expovariate(spec.request_rate)
        at = int(t * 1_000_000)
        if at >= horizon:
            break
        svc = rng.choice(services)
        out.append(WorkloadEvent(at, end, "request", None, svc.name, rng.randint(lo, hi) * spec.chunk_size))
    return out


_OP_ORDER = {"attach": 0, "handoff": 1, "request": 2}


def generate_workload(spec: WorkloadSpec, topology: Optional[Topology] = None,
                      services: Optional[tuple] = None) -> Workload:
    """Deterministic event list for ``spec``; same spec and seed give the same list."""
    spec.validate()
    topology = topology if topology is not None else grid_topology(spec)
    services = tuple(services) if services is not None else service_catalog(spec, topology)
    ends = tuple(f"end{k:03d}" for k in range(spec.n_ends))
    events = []
    for end in ends:
        events.extend(mobility_events(spec, topology, end))
        events.extend(request_events(spec, services, end))
    # stable: time, then attach/handoff before requests, then end name
    events.sort(key=lambda e: (e.time, _OP_ORDER[e.op], e.end))
    return Workload(topology, services, ends, events)
