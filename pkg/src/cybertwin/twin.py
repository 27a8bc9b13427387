"""Cybertwins: relay, behavior logger and digital-asset owner for each end.

Timing model (all integer microseconds):

* A request reaches the twin after the end->twin path latency ``p_end``.
* A source ``s`` at one-way latency ``p_s`` from the twin streams its chunk
  range back to back; chunk ``j`` of the range is fully buffered at the twin
  ``2 * p_s + (j + 1) * tx_s`` after the request reached the twin.
* The twin relays buffered chunks in sequence order while the end is
  connected. A relayed chunk lands ``p_end`` later, never before the chunk
  relayed just ahead of it on the same session.
* First-byte latency of a request is the landing time of chunk 0 minus its
  serialization time, measured from the moment the end issued the request.

During a handoff the end is unreachable for the reassociation delay; the twin
keeps buffering and resumes relaying at the first unsent sequence number.
"""

from __future__ import annotations

import hashlib
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

from .cloudos import CloudOS, PlacementPlan, Priority, Rejection, credits
from .errors import (
    AuthFailed,
    AuthRequired,
    ContractRejected,
    InsufficientFunds,
    MigrationInProgress,
    NoEdgeCapacity,
    NotAttached,
    UnknownAccessPoint,
    UnknownListing,
    UnknownNode,
    UnknownService,
)
from .model import (
    IdFormat,
    NetworkAddress,
    NodeKind,
    ObjectId,
    ObjectKind,
    ResourceVector,
    ServiceDescriptor,
    Topology,
    TrustLevel,
    Visibility,
)
from .naming import AuthMethod, Credential, NameService
from .sim import Engine

DEFAULT_REASSOCIATION_US = 20_000
DEFAULT_GRACE_US = 50_000
DEFAULT_TWIN_LEASE_US = 300_000_000
DEFAULT_TWIN_DEMAND = ResourceVector(1, 1, 0)


class TwinStatus(Enum):
    ACTIVE = "active"
    MIGRATING = "migrating"
    RETIRED = "retired"


@lru_cache(maxsize=8192)
def chunk_payload(service: str, seq: int) -> bytes:
    return hashlib.blake2b(f"{service}/{seq}".encode(), digest_size=16).digest()


class Chunk(NamedTuple):
    seq: int
    size: int
    data: bytes

    def to_json(self) -> list:
        return [self.seq, self.size, self.data.hex()]

    @classmethod
    def from_json(cls, item) -> "Chunk":
        return cls(item[0], item[1], bytes.fromhex(item[2]))


@dataclass(frozen=True)
class BehaviorRecord:
    time: int
    seq: int
    end: str
    action: str
    detail: dict

    def to_json(self) -> dict:
        return {"time": self.time, "seq": self.seq, "end": self.end, "action": self.action,
                "detail": self.detail}

    @classmethod
    def from_json(cls, d) -> "BehaviorRecord":
        return cls(d["time"], d["seq"], d["end"], d["action"], dict(d["detail"]))


@dataclass(frozen=True)
class Selector:
    """Predicate over behavior records: action tags and a half-open time window."""

    actions: Optional[frozenset] = None
    since: Optional[int] = None
    until: Optional[int] = None

    @classmethod
    def of(cls, *actions: str, since=None, until=None) -> "Selector":
        return cls(frozenset(actions) if actions else None, since, until)

    def matches(self, record: BehaviorRecord) -> bool:
        if self.actions is not None and record.action not in self.actions:
            return False
        if self.since is not None and record.time < self.since:
            return False
        if self.until is not None and record.time >= self.until:
            return False
        return True

    def to_json(self) -> dict:
        return {"actions": sorted(self.actions) if self.actions is not None else None,
                "since": self.since, "until": self.until}

    @classmethod
    def from_json(cls, d) -> "Selector":
        acts = d.get("actions")
        return cls(frozenset(acts) if acts is not None else None, d.get("since"), d.get("until"))


@dataclass
class AssetListing:
    asset_id: str
    owner: str
    selector: Selector
    price: int  # micro-credits per access
    access_count: int = 0

    def to_json(self) -> dict:
        return {"asset_id": self.asset_id, "owner": self.owner, "selector": self.selector.to_json(),
                "price": self.price, "access_count": self.access_count}


class TwinSession:
    """Per-twin view of one end session: what has been buffered and relayed."""

    __slots__ = ("id", "end", "service", "total", "chunk_size", "buffered", "delivered", "held", "sources")

    def __init__(self, id, end, service, total, chunk_size):
        self.id = id
        self.end = end
        self.service = service
        self.total = total
        self.chunk_size = chunk_size
        self.buffered = 0  # chunks 0 .. buffered-1 have all arrived
        self.delivered = 0  # chunks relayed to the end
        self.held = {}  # seq -> Chunk, not yet relayed
        self.sources = set()

    def receive(self, chunk: Chunk) -> bool:
        """Store a chunk; True if it is new."""
        seq = chunk.seq
        if seq < self.buffered or seq in self.held:
            return False
        self.held[seq] = chunk
        while self.buffered in self.held:
            self.buffered += 1
        return True

    def missing(self) -> list:
        return [s for s in range(self.buffered, self.total) if s not in self.held]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "end": self.end,
            "service": self.service,
            "total": self.total,
            "chunk_size": self.chunk_size,
            "buffered": self.buffered,
            "delivered": self.delivered,
            "sources": sorted(self.sources),
            "chunks": [self.held[s].to_json() for s in sorted(self.held)],
        }

    @classmethod
    def from_json(cls, d) -> "TwinSession":
        ts = cls(d["id"], d["end"], d["service"], d["total"], d["chunk_size"])
        ts.buffered = d["buffered"]
        ts.delivered = d["delivered"]
        ts.sources = set(d["sources"])
        ts.held = {c[0]: Chunk.from_json(c) for c in d["chunks"]}
        return ts


class Cybertwin:
    def __init__(self, twin_id: ObjectId, owner: "End", host: str, version: int,
                 status: TwinStatus = TwinStatus.ACTIVE):
        self.twin_id = twin_id
        self.owner = owner
        self.host = host
        self.version = version
        self.status = status
        self.sessions = {}
        self.log = []
        self.assets = []
        self.contract = None
        self.endpoint_str = str(self.endpoint)
        self.internal_str = str(self.internal_address)

    @property
    def wallet(self) -> str:
        return self.owner.wallet

    @property
    def endpoint(self) -> NetworkAddress:
        return NetworkAddress(self.host, Visibility.EDGE_ENDPOINT)

    @property
    def internal_address(self) -> NetworkAddress:
        return NetworkAddress(self.host, Visibility.INTERNAL)

    def snapshot(self) -> dict:
        """Serializable state (the migration payload)."""
        return {
            "twin_id": str(self.twin_id),
            "owner": self.owner.name,
            "host": self.host,
            "version": self.version,
            "status": self.status.value,
            "sessions": [ts.to_json() for ts in self.sessions.values()],
            "log": [r.to_json() for r in self.log],
            "assets": [a.to_json() for a in self.assets],
        }

    def load(self, snap: dict) -> None:
        self.sessions = {d["id"]: TwinSession.from_json(d) for d in snap["sessions"]}
        self.log = [BehaviorRecord.from_json(r) for r in snap["log"]]
        self.assets = [
            AssetListing(a["asset_id"], a["owner"], Selector.from_json(a["selector"]), a["price"],
                         a["access_count"])
            for a in snap["assets"]
        ]

    def __repr__(self):
        return f"<Cybertwin {self.owner.name} v{self.version} @{self.host} {self.status.value}>"


def state_bytes(snap: dict) -> int:
    """Transfer size: the serialized state plus the nominal bytes of held chunks."""
    meta = len(json.dumps(snap, sort_keys=True, separators=(",", ":")).encode())
    payload = sum(c[1] for s in snap["sessions"] for c in s["chunks"])
    return meta + payload


def comparable_state(snap: dict) -> dict:
    """Snapshot without the fields a migration is allowed to change."""
    out = dict(snap)
    out.pop("host", None)
    out.pop("version", None)
    return out


@dataclass
class EndSession:
    id: str
    service: str
    total: int
    nbytes: int
    issued_at: int
    sent: int = 0
    last_land: int = 0
    received: list = field(default_factory=list)
    record: Optional["DeliveryRecord"] = None


@dataclass
class DeliveryRecord:
    session: str
    end: str
    service: str
    issued_at: int
    nbytes: int
    chunks: int
    first_byte_us: Optional[int] = None
    completion_us: Optional[int] = None
    sources: tuple = ()
    status: str = "pending"
    first_tx_us: int = 0
    land_times: list = field(default_factory=list, repr=False)

    @property
    def first_byte_latency(self) -> Optional[float]:
        return None if self.first_byte_us is None else self.first_byte_us / 1000

    @property
    def completion_time(self) -> Optional[float]:
        return None if self.completion_us is None else self.completion_us / 1000


@dataclass
class HandoffRecord:
    end: str
    t0: int
    from_ap: str
    to_ap: str
    mid_transfer: bool
    reconnected_at: Optional[int] = None
    buffered_during_gap: int = 0
    superseded: bool = False

    @property
    def interruption_us(self) -> Optional[int]:
        return None if self.reconnected_at is None or self.superseded else self.reconnected_at - self.t0

    @property
    def interruption_ms(self) -> Optional[float]:
        us = self.interruption_us
        return None if us is None else us / 1000


@dataclass
class MigrationRecord:
    end: str
    from_host: str
    to_host: str
    started_at: int
    state_bytes: int
    transfer_us: int
    version: int
    snapshot: dict = field(repr=False, default_factory=dict)
    installed_state: Optional[dict] = field(repr=False, default=None)
    completed_at: Optional[int] = None


@dataclass(frozen=True)
class ActiveConnection:
    end: str
    access_point: str
    twin: NetworkAddress
    latency_us: int
    spawned: bool


class End:
    """A human or device; all traffic goes through its cybertwin."""

    def __init__(self, name: str, oid: ObjectId, credential: Credential, wallet: str):
        self.name = name
        self.oid = oid
        self.credential = credential
        self.wallet = wallet
        self.trust = TrustLevel.UNTRUSTED
        self.ap = None
        self.target_ap = None
        self.connected = False
        self.serving = None  # twin relaying to this end
        self.twins = []  # twins the end is connected to
        self.instances = []  # every twin ever created for this end
        self.home = None  # newest twin; receives behavior records
        self.switch_target = None
        self.sessions = {}
        self.open = {}  # sessions with chunks still to relay
        self.epoch = 0
        self.disconnected_at = None
        self.gap_arrivals = 0
        self.pending_requests = []
        self.pending_handoffs = []
        self.expect_version = 0
        self.discover_pending = False
        self._session_ids = 0

    def active_twins(self) -> list:
        return [t for t in self.instances if t.status is TwinStatus.ACTIVE]

    def migrating(self) -> bool:
        return any(t.status is TwinStatus.MIGRATING for t in self.instances)

    def incomplete_sessions(self) -> list:
        return list(self.open.values())

    def mid_transfer(self, now: int) -> bool:
        """Some session has chunks at the end but not all of them."""
        for es in self.sessions.values():
            if 0 < bisect_right(es.record.land_times, now) < es.total:
                return True
        return False

    def __repr__(self):
        return f"<End {self.name} ap={self.ap} connected={self.connected}>"


class _Fetch:
    """One source streaming a chunk range to one twin."""

    __slots__ = ("twin", "sid", "source", "next", "cancelled", "service")

    def __init__(self, twin, sid, source, service):
        self.twin = twin
        self.sid = sid
        self.source = source
        self.service = service
        self.next = 0
        self.cancelled = False


class CybertwinNetwork:
    """Ends, their cybertwins, and the mobility procedure between them."""

    def __init__(self, engine: Engine, topology: Topology, naming: NameService, cloud: CloudOS,
                 services=(), *, reassociation_us: int = DEFAULT_REASSOCIATION_US,
                 grace_us: int = DEFAULT_GRACE_US, twin_demand: ResourceVector = DEFAULT_TWIN_DEMAND,
                 twin_lease_us: int = DEFAULT_TWIN_LEASE_US):
        self.engine = engine
        self.topology = topology
        self.naming = naming
        self.cloud = cloud
        self.chunk_size = cloud.chunk_size
        self.reassociation_us = reassociation_us
        self.grace_us = grace_us
        self.twin_demand = twin_demand
        self.twin_lease_us = twin_lease_us
        self.services = {s.name: s for s in services}
        self.ends = {}
        self.listings = {}
        self.deliveries = []
        self.handoffs = []
        self.migrations = []
        self.fetched_chunks = 0
        self._fetched = set()
        self.on_reconnect: Optional[Callable] = None
        self.on_settled: Optional[Callable] = None
        # keep the installed state on each MigrationRecord (costs a snapshot per migration)
        self.audit_migrations = False
        self._lat = {}
        self._fetches_by_contract = {}
        self._aps = set(topology.access_points)

    # helpers

    def lat(self, a: str, b: str) -> int:
        key = (a, b)
        v = self._lat.get(key)
        if v is None:
            v = self.topology.latency_us(a, b)
            if v is None:
                raise UnknownNode(f"no path {a} -> {b}")
            self._lat[key] = v
        return v

    def end(self, end) -> End:
        return end if isinstance(end, End) else self.ends[end]

    def _record(self, end: End, action: str, **detail) -> None:
        twin = end.home
        if twin is None:
            return
        twin.log.append(BehaviorRecord(self.engine.now, len(twin.log), end.name, action, detail))

    # setup

    def add_end(self, name: str, *, kind: ObjectKind = ObjectKind.HUMAN,
                method: AuthMethod = AuthMethod.BIOMETRIC_STUB, secret: Optional[bytes] = None,
                enroll: bool = True, funds: int = credits(100_000)) -> End:
        fmt = IdFormat.LONG128 if kind is ObjectKind.HUMAN else IdFormat.SHORT48
        oid = ObjectId.derive(kind, name, fmt)
        secret = secret if secret is not None else hashlib.sha256(f"secret/{name}".encode()).digest()
        cred = Credential(oid, method, secret)
        end = End(name, oid, cred, f"end:{name}")
        if enroll:
            self.naming.enroll(cred)
        end.trust = self.naming.authenticate(cred)
        self.ends[name] = end
        if funds:
            self.cloud.fund(end.wallet, funds)
        self.engine.emit("end", "enroll", end=name, trust=end.trust.name.lower())
        return end

    def register_service(self, service: ServiceDescriptor, provider: str = "asp") -> None:
        """Name the service and point its mapping at the origin replica."""
        self.services[service.name] = service
        cred = Credential(service.id, AuthMethod.SIGNATURE_STUB,
                          hashlib.sha256(f"asp/{provider}/{service.name}".encode()).digest())
        self.naming.enroll(cred)
        try:
            origin = service.origin_in(self.topology)
        except ValueError:
            origin = sorted(service.replicas)[0]
        self.naming.register(service.id, NetworkAddress(origin, Visibility.INTERNAL), cred)

    # step 1: attach

    def attach(self, end, access_point: str) -> ActiveConnection:
        end = self.end(end)
        if access_point not in self._aps:
            raise UnknownAccessPoint(access_point)
        if end.trust <= TrustLevel.UNTRUSTED:
            self.engine.emit("end", "attach_denied", end=end.name, ap=access_point)
            raise AuthRequired(f"{end.name} is not authenticated")
        spawned = False
        if end.serving is None:
            edge = self.topology.edge_of(access_point)
            twin = self._spawn(end, edge, version=1)
            self.naming.register(end.oid, twin.internal_address, end.credential, edge)
            spawned = True
        end.ap = access_point
        end.target_ap = access_point
        end.connected = True
        twin = end.serving
        latency = self.lat(access_point, twin.host)
        self._record(end, "attach", ap=access_point, spawned=spawned)
        self.engine.emit("end", "attach", to=end.name, ap=access_point, twin=twin.endpoint_str,
                         latency_us=latency, spawned=spawned)
        return ActiveConnection(end.name, access_point, twin.endpoint, latency, spawned)

    def _spawn(self, end: End, edge: str, version: int) -> Cybertwin:
        contract = self.cloud.request_contract(end.wallet, edge, self.twin_demand, self.twin_lease_us,
                                               Priority.STANDARD)
        if isinstance(contract, Rejection):
            raise NoEdgeCapacity(f"{edge}: {contract.reason.value}")
        twin = Cybertwin(end.oid, end, edge, version,
                         TwinStatus.ACTIVE if version == 1 else TwinStatus.MIGRATING)
        twin.contract = contract
        end.instances.append(twin)
        if version == 1:
            end.serving = twin
            end.home = twin
            end.twins = [twin]
        self.engine.emit("twin", "spawn", end=end.name, host=twin.internal_str, version=version)
        return twin

    # step 2: service through the twin

    def request_service(self, end, service_id: str, nbytes: int) -> DeliveryRecord:
        end = self.end(end)
        service = self.services.get(service_id)
        if service is None:
            raise UnknownService(service_id)
        if end.serving is None:
            raise NotAttached(end.name)
        total = max(1, -(-nbytes // self.chunk_size))
        end._session_ids += 1
        sid = f"{end.name}#{end._session_ids}"
        record = DeliveryRecord(sid, end.name, service.name, self.engine.now, nbytes, total)
        es = EndSession(sid, service.name, total, nbytes, self.engine.now, record=record)
        self._record(end, "request", session=sid, service=service.name, chunks=total)
        self.engine.emit("end", "request", end=end.name, session=sid, service=service.name, chunks=total)
        self.deliveries.append(record)
        end.sessions[sid] = es
        end.open[sid] = es
        if end.connected:
            self._issue(end, es)
        else:
            end.pending_requests.append(es)
        return record

    def _issue(self, end: End, es: EndSession, raise_on_reject: bool = True) -> None:
        """Send the request to every live twin of the end; the serving one must place it."""
        service = self.services[es.service]
        chunks = tuple(range(es.total))
        for twin in [end.serving] + [t for t in end.active_twins() if t is not end.serving]:
            p_end = self.lat(end.ap, twin.host)
            try:
                plan, fetches = self._place(twin, es.id, service, chunks, lead_us=p_end)
            except ContractRejected:
                if twin is end.serving:
                    es.record.status = "rejected"
                    end.sessions.pop(es.id, None)
                    end.open.pop(es.id, None)
                    self.engine.emit("end", "request_rejected", to=end.name, session=es.id)
                    if raise_on_reject:
                        raise
                    return
                continue
            if twin is end.serving:
                es.record.sources = tuple(s.node for s in plan.sources)
                es.record.first_tx_us = plan.sources[0].tx_us
                es.record.status = "active"
            self.engine.schedule(p_end, self._twin_request, twin, es.id, service.name, es.total, fetches)

    def _place(self, twin: Cybertwin, sid: str, service: ServiceDescriptor, chunks, lead_us: int = 0):
        plan = self.cloud.place_service(twin, service, chunks=chunks, session=sid,
                                        on_preempt=self._on_preempt, lead_us=lead_us)
        fetches = []
        for src in plan.sources:
            f = _Fetch(twin, sid, src, service.name)
            self._fetches_by_contract[src.contract_id] = f
            fetches.append(f)
        return plan, fetches

    def _twin_request(self, twin: Cybertwin, sid: str, service: str, total: int, fetches: list) -> None:
        if twin.status is TwinStatus.RETIRED:
            return
        ts = twin.sessions.get(sid)
        if ts is None:
            ts = twin.sessions[sid] = TwinSession(sid, twin.owner.name, service, total, self.chunk_size)
        self._start(fetches)

    def _start(self, fetches: list) -> None:
        for f in fetches:
            f.twin.sessions[f.sid].sources.add(f.source.node)
            src = f.source
            self.engine.post(2 * src.prop_us + src.tx_us, self._arrive, f)

    def _arrive(self, f: _Fetch) -> None:
        twin = f.twin
        if f.cancelled or twin.status is TwinStatus.RETIRED:
            return
        src = f.source
        j = f.next
        seq = src.chunks[j]
        f.next = j + 1
        if j + 1 < len(src.chunks):
            self.engine.post(src.tx_us, self._arrive, f)
        self.fetched_chunks += 1
        sid = f.sid
        self._fetched.add((sid, seq))
        ts = twin.sessions[sid]
        if not ts.receive(Chunk(seq, self.chunk_size, chunk_payload(f.service, seq))):
            return
        end = twin.owner
        if end.serving is twin:
            if end.connected:
                es = end.open.get(sid)
                if es is not None and es.sent < ts.buffered:
                    self._relay(end, twin, es, ts, self.lat(end.ap, twin.host))
                if end.switch_target is not None:
                    self._try_switch(end)
            else:
                end.gap_arrivals += 1
        elif end.switch_target is twin:
            self._try_switch(end)

    def _pump(self, end: End) -> None:
        """Relay every buffered, unsent chunk of the serving twin to the end."""
        twin = end.serving
        p = self.lat(end.ap, twin.host)
        for es in list(end.open.values()):
            ts = twin.sessions.get(es.id)
            if ts is not None:
                self._relay(end, twin, es, ts, p)
        if end.switch_target is not None:
            self._try_switch(end)

    def _relay(self, end: End, twin: Cybertwin, es: EndSession, ts: TwinSession, p: int) -> None:
        now = self.engine.now
        emit = self.engine.emit
        rec = es.record
        while es.sent < ts.buffered:
            seq = es.sent
            ts.held.pop(seq, None)
            land = now + p
            if land < es.last_land:
                land = es.last_land
            es.last_land = land
            es.sent = seq + 1
            es.received.append(seq)
            rec.land_times.append(land)
            if seq == 0:
                rec.first_byte_us = land - rec.first_tx_us - es.issued_at
            emit("end", "deliver", to=end.name, session=es.id, seq=seq, land=land, via=twin.endpoint_str)
            if es.sent == es.total:
                rec.completion_us = land - es.issued_at
                rec.status = "complete"
                del end.open[es.id]
        ts.delivered = es.sent

    def _on_preempt(self, contract) -> None:
        f = self._fetches_by_contract.get(contract.id)
        if f is None or f.cancelled:
            return
        f.cancelled = True
        rest = f.source.chunks[f.next:]
        twin = f.twin
        self.engine.emit("twin", "source_lost", end=twin.owner.name, session=f.sid, src=f.source.node,
                         remaining=len(rest))
        if not rest or twin.status is TwinStatus.RETIRED:
            return
        try:
            _, fetches = self._place(twin, f.sid, self.services[f.service], rest)
        except ContractRejected:
            self.engine.emit("twin", "stalled", end=twin.owner.name, session=f.sid)
            return
        if f.sid in twin.sessions:
            self._start(fetches)

    # step 3/4: handoff

    def handoff(self, end, new_access_point: str) -> HandoffRecord:
        end = self.end(end)
        if new_access_point not in self._aps:
            raise UnknownAccessPoint(new_access_point)
        if end.serving is None:
            raise NotAttached(end.name)
        now = self.engine.now
        from_ap = end.target_ap
        if end.connected:
            end.connected = False
            end.disconnected_at = now
            end.gap_arrivals = 0
        mid = end.mid_transfer(now)
        rec = HandoffRecord(end.name, now, from_ap, new_access_point, mid)
        for earlier in end.pending_handoffs:
            earlier.superseded = True
        end.pending_handoffs.append(rec)
        self.handoffs.append(rec)
        end.epoch += 1
        end.target_ap = new_access_point
        self._record(end, "handoff", from_ap=from_ap, to_ap=new_access_point)
        self.engine.emit("end", "handoff", end=end.name, from_ap=from_ap, to_ap=new_access_point,
                         mid_transfer=mid)
        self.engine.schedule(self.reassociation_us, self._reconnect, end, end.epoch)
        return rec

    def _reconnect(self, end: End, epoch: int) -> None:
        if epoch != end.epoch:
            return
        now = self.engine.now
        end.connected = True
        end.ap = end.target_ap
        first = end.pending_handoffs[0].t0 if end.pending_handoffs else now
        for rec in end.pending_handoffs:
            rec.reconnected_at = now
        if end.pending_handoffs:
            last = end.pending_handoffs[-1]
            last.t0 = first if last.superseded else last.t0
            last.buffered_during_gap = end.gap_arrivals
        end.pending_handoffs = []
        twin = end.serving
        latency = self.lat(end.ap, twin.host)
        self.engine.emit("end", "reconnect", to=end.name, ap=end.ap, twin=twin.endpoint_str,
                         latency_us=latency, gap_arrivals=end.gap_arrivals)
        edge = self.topology.edge_of(end.ap)
        if edge != twin.host:
            self.engine.emit("end", "remote_twin", to=end.name, ap=end.ap, twin=twin.endpoint_str,
                             latency_us=latency)
        res = self.naming.resolve(end.oid, edge)
        self.engine.emit("end", "resolved", to=end.name, locator=str(res.locator), version=res.version,
                         source=res.source.value)
        self._pump(end)
        pending, end.pending_requests = end.pending_requests, []
        for es in pending:
            self._issue(end, es, raise_on_reject=False)
        if end.discover_pending:
            self._discover(end)
        if self.on_reconnect is not None:
            self.on_reconnect(end)

    # step 5: migration

    def migrate(self, twin: Cybertwin, target_edge: str) -> MigrationRecord:
        end = twin.owner
        if end.migrating() or twin.status is TwinStatus.MIGRATING:
            raise MigrationInProgress(end.name)
        if twin.status is not TwinStatus.ACTIVE:
            raise ValueError(f"{twin!r} is retired")
        if self.topology.node(target_edge).kind is not NodeKind.EDGE_CLOUD:
            raise UnknownNode(f"{target_edge!r} is not an edge cloud")
        version = max(t.version for t in end.instances) + 1
        new = self._spawn(end, target_edge, version)
        self._record(end, "migrate", from_host=twin.host, to_host=target_edge, version=version)
        snap = twin.snapshot()
        size = state_bytes(snap)
        rate = self.topology.bottleneck(twin.host, target_edge)
        transfer = (0 if math.isinf(rate) else int(math.ceil(size * 1_000_000 / rate))) \
            + self.lat(twin.host, target_edge)
        rec = MigrationRecord(end.name, twin.host, target_edge, self.engine.now, size, transfer, version,
                              snapshot=snap)
        self.migrations.append(rec)
        self.engine.emit("twin", "migrate", end=end.name, src=twin.internal_str,
                         dst=new.internal_str, state_bytes=size, transfer_us=transfer)
        self.engine.schedule(transfer, self._install, new, twin, snap, rec, len(twin.log))
        return rec

    def _install(self, new: Cybertwin, old: Cybertwin, snap: dict, rec: MigrationRecord,
                 log_mark: int) -> None:
        end = new.owner
        new.load(snap)  # load builds fresh objects
        new.status = TwinStatus.ACTIVE
        if self.audit_migrations:
            rec.installed_state = new.snapshot()
        # records and sessions the old twin picked up while the state was in flight
        for r in old.log[log_mark:]:
            new.log.append(BehaviorRecord(r.time, len(new.log), r.end, r.action, r.detail))
        # the old twin forwards every open request the snapshot does not cover,
        # including ones still on their way to it
        for sid, es in end.open.items():
            if sid not in new.sessions and es not in end.pending_requests:
                new.sessions[sid] = TwinSession(sid, end.name, es.service, es.total, self.chunk_size)
        end.home = new
        self.naming.update_locator(end.oid, new.internal_address, end.credential)
        rec.completed_at = self.engine.now
        self.engine.emit("twin", "installed", end=end.name, host=new.internal_str, version=new.version)
        for sid, ts in new.sessions.items():
            es = end.sessions.get(sid)
            if es is not None and es.sent >= es.total:
                continue
            missing = ts.missing()
            if not missing:
                continue
            try:
                _, fetches = self._place(new, sid, self.services[ts.service], missing)
            except ContractRejected:
                self.engine.emit("twin", "stalled", end=end.name, session=sid)
                continue
            self._start(fetches)
        end.expect_version = new.version
        self._discover(end)

    def _discover(self, end: End) -> None:
        """The end resolves its own id to find its newest twin."""
        if not end.connected:
            end.discover_pending = True
            return
        end.discover_pending = False
        edge = self.topology.edge_of(end.ap)
        res = self.naming.resolve(end.oid, edge)
        self.engine.emit("end", "resolved", to=end.name, locator=str(res.locator), version=res.version,
                         source=res.source.value)
        self.engine.schedule(res.latency_us, self._discovered, end, res, edge)

    def _discovered(self, end: End, res, edge: str) -> None:
        if not end.connected:
            end.discover_pending = True
            return
        if res.version < end.expect_version:
            # stale edge cache: ask again once the entry has expired
            expiry = self.naming.cache_expiry(end.oid, edge)
            when = max(self.engine.now, expiry if expiry is not None else self.engine.now)
            self.engine.emit("end", "stale_locator", to=end.name, locator=str(res.locator),
                             version=res.version, retry_at=when)
            self.engine.at(when, self._discover, end)
            return
        candidates = [t for t in end.active_twins() if t.host == res.locator.node]
        if not candidates:
            return
        twin = max(candidates, key=lambda t: t.version)
        if twin not in end.twins:
            end.twins.append(twin)
            self.engine.emit("end", "connect_twin", to=end.name, twin=twin.endpoint_str,
                             latency_us=self.lat(end.ap, twin.host))
        self.select_best(end)

    # step 6: best twin

    def select_best(self, end) -> NetworkAddress:
        end = self.end(end)
        live = [t for t in end.twins if t.status is TwinStatus.ACTIVE]
        if not live:
            raise NotAttached(f"{end.name} has no live twin")
        ap = end.ap if end.ap is not None else end.target_ap
        chosen = min(live, key=lambda t: (self.lat(ap, t.host), -t.version))
        self._record(end, "select_best", chosen=chosen.host, version=chosen.version)
        self.engine.emit("end", "select_best", to=end.name, chosen=chosen.endpoint_str,
                         candidates=[[t.endpoint_str, self.lat(ap, t.host)] for t in live])
        if chosen is end.serving:
            end.switch_target = None
            for t in live:
                if t is not chosen:
                    self.engine.schedule(self.grace_us, self._retire, t)
        else:
            end.switch_target = chosen
            self._try_switch(end)
        return chosen.endpoint

    def _try_switch(self, end: End) -> None:
        target = end.switch_target
        current = end.serving
        for es in end.incomplete_sessions():
            cur = current.sessions.get(es.id)
            if cur is None:
                continue
            new = target.sessions.get(es.id)
            if new is None or new.buffered < cur.buffered:
                return
        end.serving = target
        end.switch_target = None
        for es in end.sessions.values():
            ts = target.sessions.get(es.id)
            if ts is not None:
                for s in [s for s in ts.held if s < es.sent]:
                    del ts.held[s]
                ts.delivered = es.sent
        self.engine.emit("end", "switch", to=end.name, twin=target.endpoint_str)
        for t in list(end.twins):
            if t is not target:
                self.engine.schedule(self.grace_us, self._retire, t)
        if end.connected:
            self._pump(end)

    def _retire(self, twin: Cybertwin) -> None:
        end = twin.owner
        if twin is end.serving or twin.status is TwinStatus.RETIRED:
            return
        twin.status = TwinStatus.RETIRED
        if twin in end.twins:
            end.twins.remove(twin)
        self.engine.emit("twin", "retire", end=end.name, host=twin.internal_str, version=twin.version)
        if self.on_settled is not None:
            self.on_settled(end)

    # logger and asset owner

    def _owner_by_credential(self, credential: Credential) -> End:
        for end in self.ends.values():
            if end.oid == credential.subject:
                return end
        raise AuthFailed("unknown subject")

    def query_log(self, owner_credential: Credential, selector: Selector = Selector(),
                  owner: Optional[str] = None) -> list:
        if self.naming.authenticate(owner_credential) <= TrustLevel.UNTRUSTED:
            self.engine.emit("twin", "query_denied", subject=str(owner_credential.subject))
            raise AuthFailed("credential rejected")
        end = self._owner_by_credential(owner_credential)
        if owner is not None and end.name != owner:
            self.engine.emit("twin", "query_denied", subject=str(owner_credential.subject), owner=owner)
            raise AuthFailed(f"{end.name} does not own {owner}'s log")
        if end.home is None:
            return []
        return [r for r in end.home.log if selector.matches(r)]

    def publish_asset(self, twin: Cybertwin, selector: Selector, price: int) -> AssetListing:
        end = twin.owner
        listing = AssetListing(f"asset:{end.name}:{len(self.listings) + 1}", end.name, selector, price)
        self.listings[listing.asset_id] = listing
        end.home.assets.append(listing)
        self._record(end, "publish", asset=listing.asset_id, price=price)
        self.engine.emit("twin", "publish", end=end.name, asset=listing.asset_id, price=price)
        return listing

    def consume_asset(self, buyer: str, listing_id: str):
        """Pay the owner and receive the matching records: ``(records, ledger entry)``."""
        listing = self.listings.get(listing_id)
        if listing is None:
            raise UnknownListing(listing_id)
        owner = self.ends[listing.owner]
        if self.cloud.ledger.balance(buyer) < listing.price:
            self.engine.emit("twin", "consume_denied", buyer=buyer, asset=listing_id)
            raise InsufficientFunds(f"{buyer} cannot pay {listing.price}")
        entry = self.cloud.ledger.transfer(self.engine.now, buyer, owner.wallet, listing.price,
                                           f"asset:{listing_id}")
        listing.access_count += 1
        for a in owner.home.assets:
            if a.asset_id == listing_id:
                a.access_count = listing.access_count
        records = [r for r in owner.home.log if listing.selector.matches(r)]
        self._record(owner, "consume", asset=listing_id, buyer=buyer, price=listing.price)
        self.engine.emit("twin", "consume", end=owner.name, asset=listing_id, buyer=buyer,
                         records=len(records))
        return records, entry

    @property
    def duplicate_fetch_bytes(self) -> int:
        """Bytes fetched from sources more than once across all twins of a session."""
        return (self.fetched_chunks - len(self._fetched)) * self.chunk_size

    def retransmitted_bytes(self) -> int:
        """Bytes the ends received more than once."""
        return sum(len(es.received) - len(set(es.received))
                   for end in self.ends.values() for es in end.sessions.values()) * self.chunk_size

    # invariants

    def continuity_violations(self) -> list:
        """Sessions whose delivered sequence is not exactly 0, 1, 2, ..."""
        bad = []
        for end in self.ends.values():
            for es in end.sessions.values():
                if es.received != list(range(len(es.received))) or len(es.received) > es.total:
                    bad.append(es.id)
        return bad
