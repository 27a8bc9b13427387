"""End-to-end baseline: ends talk straight to a fixed origin at a core cloud.

There is no twin and no edge replica. A stream from the origin lands chunk
``j`` at ``start + 2 * p + (j + 1) * tx`` where ``p`` is the AP-to-origin
latency. A handoff breaks every open stream; after reassociation the end asks
again from chunk 0 and everything it already had is sent a second time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..cloudos import CloudOS, Priority, Rejection, credits, tx_time_us
from ..errors import ContractRejected, NotAttached, UnknownAccessPoint, UnknownService
from ..model import NetworkAddress, Topology, Visibility
from ..naming import NameService
from ..sim import Engine
from ..twin import DEFAULT_REASSOCIATION_US, DeliveryRecord, HandoffRecord


@dataclass
class _Attempt:
    start: int
    prop: int
    tx: int
    total: int
    token: int

    def land(self, j: int) -> int:
        return self.start + 2 * self.prop + (j + 1) * self.tx

    def landed_by(self, t: int) -> int:
        first = self.start + 2 * self.prop
        if self.tx == 0:
            return self.total if t >= first else 0
        return max(0, min(self.total, (t - first) // self.tx))


class BaselineSession:
    __slots__ = ("id", "end", "service", "total", "record", "attempt", "best")

    def __init__(self, id, end, service, total, record):
        self.id = id
        self.end = end
        self.service = service
        self.total = total
        self.record = record
        self.attempt: Optional[_Attempt] = None
        self.best = 0  # most chunks any single attempt delivered

    @property
    def done(self) -> bool:
        return self.record.completion_us is not None

    def distinct_chunks(self) -> int:
        # restarts resend from chunk 0, so the best single attempt counts
        return self.total if self.done else self.best


class BaselineEnd:
    def __init__(self, name: str, wallet: str):
        self.name = name
        self.wallet = wallet
        self.ap = None
        self.target_ap = None
        self.connected = False
        self.epoch = 0
        self.sessions = {}
        self.pending = []
        self.pending_handoffs = []
        self._ids = 0


class BaselineNetwork:
    def __init__(self, engine: Engine, topology: Topology, naming: NameService, cloud: CloudOS,
                 services=(), *, reassociation_us: int = DEFAULT_REASSOCIATION_US):
        self.engine = engine
        self.topology = topology
        self.naming = naming
        self.cloud = cloud
        self.chunk_size = cloud.chunk_size
        self.reassociation_us = reassociation_us
        self.services = {s.name: s for s in services}
        self.ends = {}
        self.deliveries = []
        self.all_sessions = {}
        self.handoffs = []
        self.migrations = []
        self.retransmitted_bytes = 0
        self._tokens = 0
        self._aps = set(topology.access_points)

    def add_end(self, name: str, funds: int = credits(100_000)) -> BaselineEnd:
        end = BaselineEnd(name, f"end:{name}")
        self.ends[name] = end
        if funds:
            self.cloud.fund(end.wallet, funds)
        return end

    def attach(self, name: str, access_point: str) -> None:
        if access_point not in self._aps:
            raise UnknownAccessPoint(access_point)
        end = self.ends[name]
        end.ap = end.target_ap = access_point
        end.connected = True
        self.engine.emit("end", "attach", to=name, ap=access_point)

    def request_service(self, name: str, service_id: str, nbytes: int) -> DeliveryRecord:
        end = self.ends[name]
        service = self.services.get(service_id)
        if service is None:
            raise UnknownService(service_id)
        if end.ap is None:
            raise NotAttached(name)
        total = max(1, -(-nbytes // self.chunk_size))
        end._ids += 1
        sid = f"{name}#{end._ids}"
        record = DeliveryRecord(sid, name, service.name, self.engine.now, nbytes, total)
        record.sources = (service.origin_in(self.topology),)
        self.deliveries.append(record)
        session = BaselineSession(sid, end, service, total, record)
        end.sessions[sid] = session
        self.all_sessions[sid] = session
        self.engine.emit("end", "request", end=name, session=sid, service=service.name, chunks=total)
        if end.connected:
            self._start(session, raise_on_reject=True)
        else:
            end.pending.append(session)
        return record

    def _start(self, session: BaselineSession, raise_on_reject: bool = False) -> None:
        end = session.end
        origin = session.record.sources[0]
        prop = self.topology.latency_us(end.ap, origin)
        rate = self.topology.bottleneck(origin, end.ap)
        tx = tx_time_us(self.chunk_size, rate)
        duration = max(1, 2 * prop + session.total * tx)
        contract = self.cloud.request_contract(end.wallet, origin, session.service.demand, duration,
                                               Priority.STANDARD)
        if isinstance(contract, Rejection):
            session.record.status = "rejected"
            del end.sessions[session.id]
            self.engine.emit("end", "request_rejected", to=end.name, session=session.id)
            if raise_on_reject:
                raise ContractRejected(f"origin {origin} rejected {session.id}", [contract])
            return
        self._tokens += 1
        session.attempt = _Attempt(self.engine.now, prop, tx, session.total, self._tokens)
        session.record.status = "active"
        self.engine.emit("end", "stream", to=end.name, session=session.id,
                         src=str(NetworkAddress(origin, Visibility.EDGE_ENDPOINT)), prop_us=prop, tx_us=tx)
        self.engine.at(session.attempt.land(session.total - 1), self._complete, session, self._tokens)

    def _settle(self, session: BaselineSession, cut: int) -> int:
        """Account for what the current attempt delivered up to ``cut``."""
        a = session.attempt
        n = a.landed_by(cut)
        rec = session.record
        if n and rec.first_byte_us is None:
            rec.first_byte_us = a.start + 2 * a.prop - rec.issued_at
        rec.land_times.extend(a.land(j) for j in range(n))
        session.best = max(session.best, n)
        return n

    def _complete(self, session: BaselineSession, token: int) -> None:
        a = session.attempt
        if a is None or a.token != token:
            return
        self._settle(session, self.engine.now)
        session.attempt = None
        rec = session.record
        rec.completion_us = self.engine.now - rec.issued_at
        rec.status = "complete"
        del session.end.sessions[session.id]
        self.engine.emit("end", "complete", to=session.end.name, session=session.id)

    def handoff(self, name: str, new_access_point: str) -> HandoffRecord:
        if new_access_point not in self._aps:
            raise UnknownAccessPoint(new_access_point)
        end = self.ends[name]
        if end.ap is None:
            raise NotAttached(name)
        now = self.engine.now
        mid = any(0 < s.attempt.landed_by(now) < s.total for s in end.sessions.values() if s.attempt)
        rec = HandoffRecord(name, now, end.target_ap, new_access_point, mid)
        for earlier in end.pending_handoffs:
            earlier.superseded = True
        end.pending_handoffs.append(rec)
        self.handoffs.append(rec)
        end.connected = False
        for s in end.sessions.values():
            if s.attempt is None:
                continue
            n = self._settle(s, now)
            self.retransmitted_bytes += n * self.chunk_size
            s.attempt = None
            end.pending.append(s)
            self.engine.emit("end", "break", to=name, session=s.id, landed=n)
        end.epoch += 1
        end.target_ap = new_access_point
        self.engine.emit("end", "handoff", end=name, from_ap=rec.from_ap, to_ap=new_access_point,
                         mid_transfer=mid)
        self.engine.schedule(self.reassociation_us, self._reconnect, end, end.epoch)
        return rec

    def _reconnect(self, end: BaselineEnd, epoch: int) -> None:
        if epoch != end.epoch:
            return
        now = self.engine.now
        end.connected = True
        end.ap = end.target_ap
        if end.pending_handoffs:
            first = end.pending_handoffs[0].t0
            for rec in end.pending_handoffs:
                rec.reconnected_at = now
            last = end.pending_handoffs[-1]
            if last.superseded:
                last.t0 = first
        end.pending_handoffs = []
        self.engine.emit("end", "reconnect", to=end.name, ap=end.ap)
        pending, end.pending = end.pending, []
        for s in pending:
            self._start(s)

    def finalize(self, horizon: int) -> None:
        for end in self.ends.values():
            for s in end.sessions.values():
                if s.attempt is not None:
                    self._settle(s, horizon)
                    s.attempt = None

    def delivered_chunks(self) -> int:
        return sum(s.distinct_chunks() for s in self.all_sessions.values())
