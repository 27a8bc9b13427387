"""Domain vocabulary: identifiers, addresses, trust, 3C resources, topology."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Optional

from . import kernels
from .errors import (
    BadLength,
    NegativeResource,
    OverAllocated,
    TopologyError,
    UnknownNode,
)

US_PER_MS = 1000
US_PER_S = 1_000_000


def ms_to_us(ms: float) -> int:
    return int(round(ms * US_PER_MS))


def us_to_ms(us: int) -> float:
    return us / US_PER_MS


class ObjectKind(Enum):
    HUMAN = "human"
    THING = "thing"
    SERVICE = "service"


class IdFormat(Enum):
    LONG128 = "long128"
    SHORT48 = "short48"

    @property
    def nbytes(self) -> int:
        return 16 if self is IdFormat.LONG128 else 6


@dataclass(frozen=True, order=True)
class ObjectId:
    """Location-independent name of a human, thing or service."""

    kind: ObjectKind
    format: IdFormat
    bits: bytes

    def __post_init__(self):
        if len(self.bits) != self.format.nbytes:
            raise BadLength(
                f"{self.format.value} id needs {self.format.nbytes} bytes, got {len(self.bits)}"
            )
        # ids are hashed and printed constantly; both are fixed at construction
        object.__setattr__(self, "_text", f"{self.kind.value}:{self.format.value}:{self.bits.hex()}")
        object.__setattr__(self, "_hash", hash(self._text))

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return self._text

    @classmethod
    def parse(cls, text: str) -> "ObjectId":
        try:
            kind, fmt, hexbits = text.split(":")
            return cls(ObjectKind(kind), IdFormat(fmt), bytes.fromhex(hexbits))
        except BadLength:
            raise
        except ValueError as exc:
            raise ValueError(f"malformed object id {text!r}") from exc

    @classmethod
    def derive(cls, kind: ObjectKind, name: str, format: IdFormat = IdFormat.LONG128) -> "ObjectId":
        """Deterministic id for a named object (hash of the name)."""
        digest = hashlib.sha256(f"{kind.value}/{name}".encode()).digest()
        return cls(kind, format, digest[: format.nbytes])


def make_object_id(kind: ObjectKind, format: IdFormat, data: bytes) -> ObjectId:
    return ObjectId(kind, format, bytes(data))


class Visibility(Enum):
    INTERNAL = "internal"
    EDGE_ENDPOINT = "endpoint"


@dataclass(frozen=True)
class NetworkAddress:
    """Locator. Internal ones never leave the cloud; ends see endpoints only."""

    node: str
    visibility: Visibility = Visibility.INTERNAL

    def __post_init__(self):
        object.__setattr__(self, "_text", f"{self.visibility.value}@{self.node}")

    def __hash__(self) -> int:
        return hash(self._text)

    def external(self) -> "NetworkAddress":
        return NetworkAddress(self.node, Visibility.EDGE_ENDPOINT)

    def __str__(self) -> str:
        return self._text

    @classmethod
    def parse(cls, text: str) -> "NetworkAddress":
        vis, node = text.split("@", 1)
        return cls(node, Visibility(vis))


class TrustLevel(IntEnum):
    UNTRUSTED = 0
    BASIC = 1
    VERIFIED = 2
    HIGH = 3


RESOURCE_TYPES = ("computing", "caching", "communications")


@dataclass(frozen=True)
class ResourceVector:
    """Integral 3C resource amounts; never negative."""

    computing: int = 0
    caching: int = 0
    communications: int = 0

    def __post_init__(self):
        for name in RESOURCE_TYPES:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{name} must be an int, got {value!r}")
            if value < 0:
                raise NegativeResource(f"{name} is negative: {value}")

    def __getitem__(self, rtype: str) -> int:
        if rtype not in RESOURCE_TYPES:
            raise KeyError(rtype)
        return getattr(self, rtype)

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        # sums of valid vectors are valid: skip the constructor checks
        out = object.__new__(ResourceVector)
        object.__setattr__(out, "computing", self.computing + other.computing)
        object.__setattr__(out, "caching", self.caching + other.caching)
        object.__setattr__(out, "communications", self.communications + other.communications)
        return out

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        # the constructor rejects negative components
        return ResourceVector(
            self.computing - other.computing,
            self.caching - other.caching,
            self.communications - other.communications,
        )

    def fits_in(self, other: "ResourceVector") -> bool:
        return (
            self.computing <= other.computing
            and self.caching <= other.caching
            and self.communications <= other.communications
        )

    def shortfall(self, available: "ResourceVector") -> "ResourceVector":
        """Componentwise ``max(0, self - available)``."""
        return ResourceVector(
            max(0, self.computing - available.computing),
            max(0, self.caching - available.caching),
            max(0, self.communications - available.communications),
        )

    def is_zero(self) -> bool:
        return not (self.computing or self.caching or self.communications)

    def as_tuple(self) -> tuple:
        return (self.computing, self.caching, self.communications)

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in RESOURCE_TYPES}

    @classmethod
    def from_json(cls, data) -> "ResourceVector":
        if isinstance(data, (list, tuple)):
            return cls(*data)
        return cls(**{k: data.get(k, 0) for k in RESOURCE_TYPES})


ZERO = ResourceVector()


def occupancy(pool_capacity: ResourceVector, allocated: ResourceVector, resource_type: str) -> float:
    cap = pool_capacity[resource_type]
    used = allocated[resource_type]
    if used > cap:
        raise OverAllocated(f"{resource_type}: {used} allocated of {cap}")
    if cap == 0:
        return 0.0
    return used / cap


class NodeKind(Enum):
    ACCESS_POINT = "access_point"
    EDGE_CLOUD = "edge_cloud"
    CORE_CLOUD = "core_cloud"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    operator: str
    capacity: ResourceVector = ZERO
    position: Optional[tuple] = None
    # egress serving rate in bytes/s; None means unlimited
    bandwidth: Optional[float] = None


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    latency_us: int
    bandwidth: float  # bytes per second

    @property
    def latency_ms(self) -> float:
        return us_to_ms(self.latency_us)


class Topology:
    """Access points, edge and core clouds, and the latency graph between them.

    Immutable after construction; path tables are computed once on first use.
    """

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link], attachments: Optional[dict] = None):
        self.nodes = {}
        for node in nodes:
            if node.id in self.nodes:
                raise TopologyError(f"duplicate node {node.id!r}")
            self.nodes[node.id] = node
        self.links = tuple(links)
        self.attachments = dict(attachments or {})
        self._order = sorted(self.nodes)
        self._index = {nid: i for i, nid in enumerate(self._order)}
        self._link_of = {}
        self._edge_of_ap = {}
        self._dist = None
        self._parent = None
        self._bottleneck = {}
        self._validate()

    def _validate(self):
        for link in self.links:
            for end in (link.a, link.b):
                if end not in self.nodes:
                    raise TopologyError(f"link {link.a}-{link.b} references unknown node {end!r}")
            if link.a == link.b:
                raise TopologyError(f"self-loop at {link.a!r}")
            if link.latency_us <= 0:
                raise TopologyError(f"link {link.a}-{link.b}: latency must be > 0")
            if link.bandwidth <= 0:
                raise TopologyError(f"link {link.a}-{link.b}: bandwidth must be > 0")
            key = frozenset((link.a, link.b))
            if key in self._link_of:
                raise TopologyError(f"duplicate link {link.a}-{link.b}")
            self._link_of[key] = link
        for ap in self.access_points:
            edges = [
                other
                for other in self.neighbors(ap)
                if self.nodes[other].kind is NodeKind.EDGE_CLOUD
            ]
            if len(edges) != 1:
                raise TopologyError(f"access point {ap!r} must link to exactly one edge cloud, found {len(edges)}")
            self._edge_of_ap[ap] = edges[0]
        cores = self.core_clouds
        for i, a in enumerate(cores):
            for b in cores[i + 1:]:
                if frozenset((a, b)) not in self._link_of:
                    raise TopologyError(f"core clouds {a!r} and {b!r} are not directly linked")
        for end, ap in self.attachments.items():
            if ap not in self.nodes or self.nodes[ap].kind is not NodeKind.ACCESS_POINT:
                raise TopologyError(f"end {end!r} attached to non-access-point {ap!r}")

    def _of_kind(self, kind: NodeKind) -> list:
        return [nid for nid in self._order if self.nodes[nid].kind is kind]

    @property
    def access_points(self) -> list:
        return self._of_kind(NodeKind.ACCESS_POINT)

    @property
    def edge_clouds(self) -> list:
        return self._of_kind(NodeKind.EDGE_CLOUD)

    @property
    def core_clouds(self) -> list:
        return self._of_kind(NodeKind.CORE_CLOUD)

    def node(self, nid: str) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise UnknownNode(nid) from None

    def neighbors(self, nid: str) -> list:
        out = []
        for link in self.links:
            if link.a == nid:
                out.append(link.b)
            elif link.b == nid:
                out.append(link.a)
        return sorted(out)

    def link(self, a: str, b: str) -> Optional[Link]:
        return self._link_of.get(frozenset((a, b)))

    def edge_of(self, ap: str) -> str:
        if ap not in self._edge_of_ap:
            raise UnknownNode(ap)
        return self._edge_of_ap[ap]

    def _tables(self):
        if self._dist is None:
            idx = self._index
            self._dist, self._parent = kernels.all_pairs_paths(
                len(self._order),
                [idx[l.a] for l in self.links],
                [idx[l.b] for l in self.links],
                [l.latency_us for l in self.links],
            )
        return self._dist, self._parent

    def latency_us(self, src: str, dst: str) -> Optional[int]:
        """Minimum path latency in microseconds, None when disconnected."""
        try:
            i, j = self._index[src], self._index[dst]
        except KeyError as exc:
            raise UnknownNode(exc.args[0]) from None
        d = self._tables()[0][i][j]
        return None if d < 0 else d

    def path(self, src: str, dst: str) -> Optional[list]:
        """Node-id sequence of the chosen minimum-latency path."""
        lat = self.latency_us(src, dst)
        if lat is None:
            return None
        parent = self._tables()[1][self._index[src]]
        seq = [dst]
        v = self._index[dst]
        s = self._index[src]
        while v != s:
            v = parent[v]
            seq.append(self._order[v])
        seq.reverse()
        return seq

    def bottleneck(self, src: str, dst: str) -> float:
        """Smallest rate along the path: link bandwidths and the source egress."""
        key = (src, dst)
        rate = self._bottleneck.get(key)
        if rate is None:
            rate = self._bottleneck[key] = self._path_rate(src, dst)
        return rate

    def _path_rate(self, src: str, dst: str) -> float:
        seq = self.path(src, dst)
        if seq is None:
            return 0.0
        rate = self.nodes[src].bandwidth
        rate = float("inf") if rate is None else rate
        for a, b in zip(seq, seq[1:]):
            rate = min(rate, self._link_of[frozenset((a, b))].bandwidth)
        return rate

    def nearest(self, src: str, candidates: Iterable[str]) -> Optional[str]:
        """Candidate with the smallest latency from ``src`` (ties by id)."""
        best = None
        for c in sorted(candidates):
            lat = self.latency_us(src, c)
            if lat is None:
                continue
            if best is None or lat < best[0]:
                best = (lat, c)
        return None if best is None else best[1]

    def scaled(self, factor: int) -> "Topology":
        """Copy with every link latency multiplied by a positive integer."""
        links = [Link(l.a, l.b, l.latency_us * factor, l.bandwidth) for l in self.links]
        return Topology(self.nodes.values(), links, self.attachments)

    def to_json(self) -> dict:
        nodes = []
        for nid in self._order:
            n = self.nodes[nid]
            item = {
                "id": n.id,
                "kind": n.kind.value,
                "operator": n.operator,
                "capacity": n.capacity.to_json(),
            }
            if n.position is not None:
                item["position"] = list(n.position)
            if n.bandwidth is not None:
                item["bandwidth"] = n.bandwidth
            nodes.append(item)
        links = [
            {"a": l.a, "b": l.b, "latency_ms": l.latency_ms, "bandwidth": l.bandwidth}
            for l in self.links
        ]
        attachments = [{"end": e, "ap": ap} for e, ap in sorted(self.attachments.items())]
        return {"nodes": nodes, "links": links, "attachments": attachments}

    @classmethod
    def from_json(cls, data: dict) -> "Topology":
        nodes = [
            Node(
                id=n["id"],
                kind=NodeKind(n["kind"]),
                operator=n.get("operator", "cloud-op"),
                capacity=ResourceVector.from_json(n.get("capacity", {})),
                position=tuple(n["position"]) if n.get("position") is not None else None,
                bandwidth=n.get("bandwidth"),
            )
            for n in data["nodes"]
        ]
        links = [
            Link(l["a"], l["b"], ms_to_us(l["latency_ms"]), float(l.get("bandwidth", 1e9)))
            for l in data.get("links", [])
        ]
        attachments = {a["end"]: a["ap"] for a in data.get("attachments", [])}
        return cls(nodes, links, attachments)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def path_latency(topology: Topology, src_node: str, dst_node: str) -> Optional[float]:
    """Minimum-latency path length in milliseconds; None if disconnected."""
    lat = topology.latency_us(src_node, dst_node)
    return None if lat is None else us_to_ms(lat)


@dataclass(frozen=True)
class ServiceDescriptor:
    """An application service and the nodes holding a replica of it."""

    name: str
    replicas: tuple
    size: int
    demand: ResourceVector = field(default_factory=lambda: ResourceVector(1, 1, 1))
    origin: Optional[str] = None

    def __post_init__(self):
        if not self.replicas:
            raise ValueError(f"service {self.name!r} has no replica")
        if self.size <= 0:
            raise ValueError(f"service {self.name!r} size must be > 0")
        if self.origin is not None and self.origin not in self.replicas:
            raise ValueError(f"origin {self.origin!r} of {self.name!r} is not a replica")

    @property
    def id(self) -> ObjectId:
        return ObjectId.derive(ObjectKind.SERVICE, self.name)

    def origin_in(self, topology: Topology) -> str:
        """Fixed origin server: explicit, else the first core replica by id."""
        if self.origin is not None:
            return self.origin
        cores = [r for r in sorted(self.replicas) if topology.node(r).kind is NodeKind.CORE_CLOUD]
        if not cores:
            raise ValueError(f"service {self.name!r} has no core replica to act as origin")
        return cores[0]
