"""Cloud network operating system: 3C pools, dynamic pricing, contracts, ledger.

Money is held in integer micro-credits so settlement is exact. Unit prices
are credits per resource unit per second of contract time; a contract's
total is ``round(sum(demand[t] * unit_price[t]) * duration_us)`` micro-credits.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Optional

from .errors import ContractRejected, NoPeering, RefusedCannotFit, UnknownNode
from .model import RESOURCE_TYPES, ZERO, ResourceVector, ServiceDescriptor, Topology, occupancy
from .sim import Engine

MICRO = 1_000_000
WORLD = "world"


def credits(amount: float) -> int:
    """Credits to integer micro-credits."""
    return int(round(amount * MICRO))


def fmt_credits(micro: int) -> str:
    sign = "-" if micro < 0 else ""
    whole, frac = divmod(abs(micro), MICRO)
    return f"{sign}{whole}.{frac:06d}"


def operator_agent(operator: str) -> str:
    return f"op:{operator}"


@dataclass(frozen=True)
class PricingParams:
    base: tuple = (1.0, 1.0, 1.0)
    alpha: float = 1.0
    cap: tuple = (50.0, 50.0, 50.0)

    def __post_init__(self):
        if len(self.base) != 3 or len(self.cap) != 3:
            raise ValueError("base and cap need one entry per resource type")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        for p0, pmax in zip(self.base, self.cap):
            if p0 < 0:
                raise ValueError("base price must be >= 0")
            if not pmax > p0:
                raise ValueError(f"price cap {pmax} must exceed base {p0}")

    @classmethod
    def uniform(cls, base: float = 1.0, alpha: float = 1.0, cap: float = 50.0) -> "PricingParams":
        return cls((base,) * 3, alpha, (cap,) * 3)


def price_curve(base: float, alpha: float, cap: float, u: float) -> float:
    """``min(cap, base * (1 + alpha * u / (1 - u)))``, and ``cap`` at ``u == 1``."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"occupancy {u} outside [0, 1]")
    if u >= 1.0:
        return cap
    return min(cap, base * (1.0 + alpha * u / (1.0 - u)))


def unit_price(params: PricingParams, u: float, resource: str = "computing") -> float:
    i = RESOURCE_TYPES.index(resource)
    return price_curve(params.base[i], params.alpha, params.cap[i], u)


class Priority(IntEnum):
    BEST_EFFORT = 0
    STANDARD = 1
    CRITICAL = 2


class ContractState(Enum):
    ACTIVE = "active"
    EXPIRED = "expired"
    PREEMPTED = "preempted"


class RejectReason(Enum):
    PRICE_TOO_HIGH = "price_too_high"
    INSUFFICIENT = "insufficient"
    INSUFFICIENT_FUNDS = "insufficient_funds"


@dataclass(frozen=True)
class Rejection:
    reason: RejectReason
    node: str
    quote: int

    def __bool__(self):
        return False


@dataclass
class Contract:
    id: int
    buyer: str
    seller: str
    node: str
    demand: ResourceVector
    unit_prices: tuple
    start: int
    duration: int
    priority: Priority
    total: int
    payees: tuple  # ((agent, micro-credits), ...) summing to total
    state: ContractState = ContractState.ACTIVE
    ended_at: Optional[int] = None
    on_preempt: Optional[Callable] = field(default=None, repr=False, compare=False)
    end: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.end = self.start + self.duration

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "buyer": self.buyer,
            "seller": self.seller,
            "node": self.node,
            "demand": self.demand.to_json(),
            "unit_prices": list(self.unit_prices),
            "start": self.start,
            "duration": self.duration,
            "priority": self.priority.name.lower(),
            "total": self.total,
            "payees": [list(p) for p in self.payees],
            "state": self.state.value,
            "ended_at": self.ended_at,
        }


@dataclass(frozen=True)
class LedgerEntry:
    time: int
    debit: str
    credit: str
    amount: int
    reason: str


class Ledger:
    """Append-only double-entry payments; the balances always sum to zero."""

    def __init__(self):
        self.entries = []
        self.balances = {WORLD: 0}

    def transfer(self, time: int, debit: str, credit: str, amount: int, reason: str) -> LedgerEntry:
        if not isinstance(amount, int) or amount < 0:
            raise ValueError(f"amount must be a non-negative int, got {amount!r}")
        entry = LedgerEntry(time, debit, credit, amount, reason)
        self.entries.append(entry)
        self.balances[debit] = self.balances.get(debit, 0) - amount
        self.balances[credit] = self.balances.get(credit, 0) + amount
        return entry

    def balance(self, agent: str) -> int:
        return self.balances.get(agent, 0)

    def total(self) -> int:
        return sum(self.balances.values())

    def replayed_balances(self) -> dict:
        out = {WORLD: 0}
        for e in self.entries:
            out[e.debit] = out.get(e.debit, 0) - e.amount
            out[e.credit] = out.get(e.credit, 0) + e.amount
        return out

    def totals_by_class(self) -> dict:
        """Net balance per agent class (the prefix before ``:``)."""
        out = {}
        for agent, bal in sorted(self.balances.items()):
            cls = agent.split(":", 1)[0]
            out[cls] = out.get(cls, 0) + bal
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "debit", "credit", "amount", "reason"])
        for e in self.entries:
            writer.writerow([e.time, e.debit, e.credit, fmt_credits(e.amount), e.reason])
        return buf.getvalue()


class ResourcePool:
    def __init__(self, node: str, capacity: ResourceVector):
        self.node = node
        self.capacity = capacity
        self.allocated = ZERO
        self.contracts = []  # active, in signing order

    @property
    def free(self) -> ResourceVector:
        return self.capacity - self.allocated

    def can_fit(self, demand: ResourceVector) -> bool:
        cap, used = self.capacity, self.allocated
        return (used.computing + demand.computing <= cap.computing
                and used.caching + demand.caching <= cap.caching
                and used.communications + demand.communications <= cap.communications)

    def occupancy(self, rtype: str) -> float:
        return occupancy(self.capacity, self.allocated, rtype)

    def recomputed(self) -> ResourceVector:
        cp = ca = co = 0
        for c in self.contracts:
            d = c.demand
            cp += d.computing
            ca += d.caching
            co += d.communications
        return ResourceVector(cp, ca, co)


@dataclass(frozen=True)
class PlanSource:
    node: str
    chunks: tuple
    rate: float  # bytes/s
    prop_us: int  # one-way latency source -> twin host
    tx_us: int  # per-chunk serialization time
    contract_id: int


@dataclass(frozen=True)
class PlacementPlan:
    session: str
    sources: tuple
    contracts: tuple


def proportional_split(n: int, weights: list) -> list:
    """Integer shares of ``n`` proportional to ``weights`` (largest remainder, ties to lower index)."""
    total = sum(weights)
    exact = [n * w / total for w in weights]
    shares = [int(math.floor(x)) for x in exact]
    rest = n - sum(shares)
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - shares[i]), i))
    for i in order[:rest]:
        shares[i] += 1
    return shares


def tx_time_us(chunk_size: int, rate: float) -> int:
    if math.isinf(rate):
        return 0
    return int(math.ceil(chunk_size * 1_000_000 / rate))


class CloudOS:
    """Per-node resource pools traded on a posted-price market."""

    def __init__(self, engine: Engine, topology: Topology, *, pricing: Optional[dict] = None,
                 default_pricing: PricingParams = PricingParams(), peering: Optional[dict] = None,
                 max_sources: int = 2, chunk_size: int = 65536):
        self.engine = engine
        self.topology = topology
        self.pricing = dict(pricing or {})
        self.default_pricing = default_pricing
        self.peering = dict(peering or {})
        self.max_sources = max_sources
        self.chunk_size = chunk_size
        self.ledger = Ledger()
        self.pools = {nid: ResourcePool(nid, n.capacity) for nid, n in sorted(topology.nodes.items())}
        self.contracts = {}
        self._ids = itertools.count(1)
        self._operator = {nid: n.operator for nid, n in topology.nodes.items()}
        self._routes = {}  # (host, service) -> [(node, latency, rate, tx_us)], nearest first

    # pricing

    def params_for(self, operator: str) -> PricingParams:
        return self.pricing.get(operator, self.default_pricing)

    def pool(self, node: str) -> ResourcePool:
        try:
            return self.pools[node]
        except KeyError:
            raise UnknownNode(node) from None

    def quote(self, node: str, demand: ResourceVector, duration_us: int, operator: Optional[str] = None):
        """``(total micro-credits, unit prices)`` at the pool's current occupancy."""
        pool = self.pool(node)
        params = self.params_for(operator or self._operator[node])
        cap, used = pool.capacity, pool.allocated
        base, alpha, pmax = params.base, params.alpha, params.cap
        prices = (
            price_curve(base[0], alpha, pmax[0], used.computing / cap.computing if cap.computing else 0.0),
            price_curve(base[1], alpha, pmax[1], used.caching / cap.caching if cap.caching else 0.0),
            price_curve(base[2], alpha, pmax[2],
                        used.communications / cap.communications if cap.communications else 0.0),
        )
        rate = demand.computing * prices[0] + demand.caching * prices[1] + demand.communications * prices[2]
        return int(round(rate * duration_us)), prices

    # funding

    def fund(self, agent: str, amount: int, reason: str = "funding") -> None:
        self.ledger.transfer(self.engine.now, WORLD, agent, amount, reason)
        self.engine.emit("cloudos", "fund", agent=agent, amount=amount)

    # contracts

    def _evaluate(self, agent, node, demand, duration_us, priority, bid_cap, operator=None):
        """Dry run: ``(quote, prices, victims or None, Rejection or None)``; no mutation."""
        pool = self.pool(node)
        total, prices = self.quote(node, demand, duration_us, operator)
        if bid_cap is not None and total > bid_cap:
            return total, prices, None, Rejection(RejectReason.PRICE_TOO_HIGH, node, total)
        if self.ledger.balance(agent) < total:
            return total, prices, None, Rejection(RejectReason.INSUFFICIENT_FUNDS, node, total)
        if pool.can_fit(demand):
            return total, prices, [], None
        if priority is Priority.CRITICAL:
            victims = preemption_set(pool.contracts, demand.shortfall(pool.free))
            if victims is not None:
                return total, prices, victims, None
        return total, prices, None, Rejection(RejectReason.INSUFFICIENT, node, total)

    def request_contract(self, agent: str, node: str, demand: ResourceVector, duration_us: int,
                         priority: Priority = Priority.STANDARD, bid_cap: Optional[int] = None,
                         on_preempt: Optional[Callable] = None):
        """Sign a prepaid contract or return a :class:`Rejection` (no mutation)."""
        self.pool(node)
        seller = operator_agent(self._operator[node])
        return self._sign(agent, node, demand, duration_us, priority, bid_cap, on_preempt,
                          payees=None, seller=seller)

    def _sign(self, agent, node, demand, duration_us, priority, bid_cap, on_preempt, payees, seller,
              operator=None, evaluation=None):
        if duration_us <= 0:
            raise ValueError("contract duration must be positive")
        if evaluation is None:
            evaluation = self._evaluate(agent, node, demand, duration_us, priority, bid_cap, operator)
        total, prices, victims, rejection = evaluation
        if rejection is not None:
            self.engine.emit("cloudos", "reject", buyer=agent, node=node, reason=rejection.reason.value,
                             quote=total)
            return rejection
        pool = self.pools[node]
        if victims:
            self._preempt(pool, victims)
        if payees is None:
            payees = ((seller, total),)
        else:
            payees = payees(total)
        contract = Contract(next(self._ids), agent, seller, node, demand, prices, self.engine.now,
                            duration_us, priority, total, payees, on_preempt=on_preempt)
        pool.allocated = pool.allocated + demand
        pool.contracts.append(contract)
        self.contracts[contract.id] = contract
        for payee, amount in payees:
            self.ledger.transfer(self.engine.now, agent, payee, amount, f"contract:{contract.id}")
        self.engine.at(contract.end, self._expire_pool, pool)
        self.engine.emit("cloudos", "contract", id=contract.id, buyer=agent, seller=seller, node=node,
                         demand=list(demand.as_tuple()), total=total, priority=priority.name.lower(),
                         until=contract.end)
        return contract

    def reallocate_on_scarcity(self, pool: ResourcePool, demand: ResourceVector,
                               priority: Priority = Priority.CRITICAL) -> list:
        """Preempt the smallest set of lower-priority contracts that makes ``demand`` fit."""
        if priority is not Priority.CRITICAL:
            raise RefusedCannotFit("only critical requests may preempt")
        need = demand.shortfall(pool.free)
        if need.is_zero():
            return []
        victims = preemption_set(pool.contracts, need)
        if victims is None:
            raise RefusedCannotFit(f"{pool.node}: cannot fit {demand.as_tuple()} even after preemption")
        self._preempt(pool, victims)
        return victims

    def _preempt(self, pool: ResourcePool, victims: list) -> None:
        now = self.engine.now
        for c in victims:
            c.state = ContractState.PREEMPTED
            c.ended_at = now
            pool.contracts.remove(c)
            pool.allocated = pool.allocated - c.demand
            remaining = max(0, c.end - now)
            for payee, amount in c.payees:
                refund = amount * remaining // c.duration
                if refund:
                    self.ledger.transfer(now, payee, c.buyer, refund, f"refund:{c.id}")
            self.engine.emit("cloudos", "preempt", id=c.id, node=pool.node, remaining_us=remaining)
        for c in victims:
            if c.on_preempt is not None:
                c.on_preempt(c)

    def expire_contracts(self, now: Optional[int] = None) -> list:
        """End every contract whose term is over at ``now`` (default: current time)."""
        now = self.engine.now if now is None else now
        expired = []
        for pool in self.pools.values():
            expired.extend(self._expire_pool(pool, now))
        return expired

    def _expire_pool(self, pool: ResourcePool, now: Optional[int] = None) -> list:
        now = self.engine.now if now is None else now
        expired = []
        keep = []
        for c in pool.contracts:
            if c.end <= now:
                c.state = ContractState.EXPIRED
                c.ended_at = c.end
                expired.append(c)
            else:
                keep.append(c)
        if expired:
            pool.contracts = keep
            pool.allocated = pool.recomputed()
        for c in expired:
            self.engine.emit("cloudos", "expire", id=c.id, node=c.node)
        return expired

    def cross_operator_request(self, buyer: str, home_operator: str, node: str, demand: ResourceVector,
                               duration_us: int, priority: Priority = Priority.STANDARD,
                               bid_cap: Optional[int] = None):
        foreign = self.topology.node(node).operator
        sigma = self.peering.get((home_operator, foreign))
        if sigma is None:
            raise NoPeering(f"no peering between {home_operator!r} and {foreign!r}")
        sigma_ppm = int(round(sigma * MICRO))

        def split(total):
            foreign_share = total * sigma_ppm // MICRO
            return ((operator_agent(foreign), foreign_share),
                    (operator_agent(home_operator), total - foreign_share))

        return self._sign(buyer, node, demand, duration_us, priority, bid_cap, None, payees=split,
                          seller=operator_agent(foreign), operator=foreign)

    # service placement

    def place_service(self, twin, service: ServiceDescriptor, nbytes: int = 0, *, chunks=None,
                      session: str = "", on_preempt: Optional[Callable] = None,
                      lead_us: int = 0) -> PlacementPlan:
        """Pick up to ``max_sources`` nearest replicas and split the chunks by rate.

        ``twin`` needs ``host`` and ``wallet`` attributes. All backing contracts
        are checked before any is signed, so a rejection leaves no trace in the
        pools or the ledger. ``lead_us`` extends each contract by the time the
        request still needs to reach the twin.
        """
        host = twin.host
        if chunks is None:
            chunks = tuple(range(max(1, -(-nbytes // self.chunk_size))))
        chunks = tuple(chunks)
        route = self._route(host, service)
        rates = [r[2] for r in route]
        if any(math.isinf(x) for x in rates):
            # an unlimited co-located source takes everything
            weights = [1.0 if math.isinf(x) else 0.0 for x in rates]
        else:
            weights = rates
        shares = proportional_split(len(chunks), weights)
        assignments = []
        start = 0
        for (node, lat, rate, tx), share in zip(route, shares):
            if share == 0:
                continue
            assignments.append((node, lat, rate, tx, chunks[start:start + share]))
            start += share
        wallet = twin.wallet
        durations = []
        evaluations = []
        for node, lat, rate, tx, part in assignments:
            dur = max(1, lead_us + 2 * lat + len(part) * tx)
            durations.append(dur)
            evaluations.append(self._evaluate(wallet, node, service.demand, dur, Priority.STANDARD, None))
        rejections = [ev[3] for ev in evaluations if ev[3] is not None]
        if not rejections and sum(ev[0] for ev in evaluations) > self.ledger.balance(wallet):
            rejections.append(Rejection(RejectReason.INSUFFICIENT_FUNDS, assignments[0][0],
                                        sum(ev[0] for ev in evaluations)))
        if rejections:
            self.engine.emit("cloudos", "place_rejected", session=session, service=service.name,
                             reasons=[r.reason.value for r in rejections])
            raise ContractRejected(f"placement of {service.name} rejected", rejections)
        sources = []
        contracts = []
        for (node, lat, rate, tx, part), dur, ev in zip(assignments, durations, evaluations):
            # sources sit on distinct pools, so each dry run is still exact
            c = self._sign(wallet, node, service.demand, dur, Priority.STANDARD, None, on_preempt,
                           payees=None, seller=operator_agent(self._operator[node]), evaluation=ev)
            contracts.append(c)
            sources.append(PlanSource(node, part, rate, lat, tx, c.id))
        plan = PlacementPlan(session, tuple(sources), tuple(contracts))
        self.engine.emit("cloudos", "place", session=session, service=service.name,
                         sources=[[s.node, len(s.chunks)] for s in sources])
        return plan

    def _route(self, host: str, service: ServiceDescriptor) -> list:
        """Up to ``max_sources`` replicas nearest to ``host`` with their path latency and rate."""
        key = (host, service.name, service.replicas)
        route = self._routes.get(key)
        if route is None:
            topo = self.topology
            ranked = sorted(
                (lat, r) for r in service.replicas
                if (lat := topo.latency_us(host, r)) is not None
            )
            if not ranked:
                raise ContractRejected(f"no reachable replica of {service.name}")
            route = []
            for lat, node in ranked[: self.max_sources]:
                rate = topo.bottleneck(node, host)
                route.append((node, lat, rate, tx_time_us(self.chunk_size, rate)))
            self._routes[key] = route
        return route

    # invariants / exports

    def capacity_safe(self) -> bool:
        return all(p.allocated.fits_in(p.capacity) for p in self.pools.values())

    def allocations_consistent(self) -> bool:
        return all(p.allocated == p.recomputed() for p in self.pools.values())

    def contract_log(self) -> str:
        return "".join(
            json.dumps(c.to_json(), sort_keys=True, separators=(",", ":")) + "\n"
            for c in self.contracts.values()
        )


def preemption_set(contracts: list, need: ResourceVector) -> Optional[list]:
    """Fewest preemptible contracts whose demands cover ``need``.

    Candidates are the best-effort and standard contracts, ordered by
    (priority, start, id). Among equally small covering sets the one whose
    candidate-index tuple is lexicographically smallest wins, i.e. lower
    priority and older contracts go first. Returns None if no set covers.
    """
    cands = sorted(
        (c for c in contracts if c.priority < Priority.CRITICAL and c.state is ContractState.ACTIVE),
        key=lambda c: (c.priority, c.start, c.id),
    )
    need_t = need.as_tuple()
    if need.is_zero():
        return []
    vecs = [c.demand.as_tuple() for c in cands]
    n = len(cands)
    # suffix sums bound what the remaining candidates can still contribute
    suffix = [(0, 0, 0)] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = tuple(a + b for a, b in zip(suffix[i + 1], vecs[i]))
    if any(s < r for s, r in zip(suffix[0], need_t)):
        return None

    def search(start, k, acc, chosen):
        if all(a >= r for a, r in zip(acc, need_t)):
            return list(chosen)
        if k == 0:
            return None
        for i in range(start, n - k + 1):
            reach = tuple(a + s for a, s in zip(acc, suffix[i]))
            if any(x < r for x, r in zip(reach, need_t)):
                break
            chosen.append(i)
            found = search(i + 1, k - 1, tuple(a + b for a, b in zip(acc, vecs[i])), chosen)
            chosen.pop()
            if found is not None:
                return found
        return None

    for k in range(1, n + 1):
        found = search(0, k, (0, 0, 0), [])
        if found is not None:
            return [cands[i] for i in found]
    return None
