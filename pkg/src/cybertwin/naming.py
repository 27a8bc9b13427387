"""Locator/identifier separation.

Core clouds hold the authoritative ObjectId -> NetworkAddress mapping
(synchronously replicated across the core clique); edge clouds keep TTL
caches in front of it. Cached entries are never invalidated by updates; they
go stale until their TTL runs out.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .errors import AlreadyRegistered, AuthFailed, UnknownId, UnknownNode
from .model import NetworkAddress, ObjectId, Topology, TrustLevel
from .sim import Engine

DEFAULT_TTL_US = 500_000
DEFAULT_CACHE_BOUND = 4096


class AuthMethod(Enum):
    BIOMETRIC_STUB = "biometric"
    SIGNATURE_STUB = "signature"


_TRUST_OF_METHOD = {
    AuthMethod.BIOMETRIC_STUB: TrustLevel.VERIFIED,
    AuthMethod.SIGNATURE_STUB: TrustLevel.BASIC,
}


@dataclass(frozen=True)
class Credential:
    subject: ObjectId
    method: AuthMethod
    secret: bytes


@dataclass(frozen=True)
class MappingEntry:
    id: ObjectId
    locator: NetworkAddress
    version: int
    registered_at: int
    trust: TrustLevel
    home_core: str = ""


@dataclass(frozen=True)
class CacheEntry:
    entry: MappingEntry
    expires_at: int


class Source(Enum):
    CACHE = "cache"
    CORE = "core"


@dataclass(frozen=True)
class Resolution:
    locator: NetworkAddress  # always an edge endpoint
    latency_us: int
    source: Source
    version: int

    @property
    def latency_ms(self) -> float:
        return self.latency_us / 1000


class NameService:
    """Authoritative registry plus per-edge caches and a stub trust authority."""

    def __init__(self, engine: Engine, topology: Topology, *, ttl_us: int = DEFAULT_TTL_US,
                 cache_bound: int = DEFAULT_CACHE_BOUND):
        if not topology.core_clouds:
            raise ValueError("name service needs at least one core cloud")
        self.engine = engine
        self.topology = topology
        self.ttl_us = ttl_us
        self.cache_bound = cache_bound
        self._enrolled = {}
        self._registry = {}
        self._caches = {edge: OrderedDict() for edge in topology.edge_clouds}
        self._resolved_at = {edge: set() for edge in topology.edge_clouds}
        self.log = []
        self._core_latency = {}

    # trust

    def enroll(self, credential: Credential) -> None:
        """Record the secret the cloud operator will accept for ``subject``."""
        self._enrolled[(credential.subject, credential.method)] = credential.secret

    def authenticate(self, credential: Credential) -> TrustLevel:
        secret = self._enrolled.get((credential.subject, credential.method))
        if secret is None or secret != credential.secret:
            return TrustLevel.UNTRUSTED
        return _TRUST_OF_METHOD[credential.method]

    def _log(self, op, **fields):
        record = {"seq": len(self.log), "t": self.engine.now, "op": op}
        record.update(fields)
        self.log.append(record)
        self.engine.emit("naming", op, **fields)

    def _check(self, id: ObjectId, credential: Credential, op: str) -> TrustLevel:
        trust = self.authenticate(credential) if credential.subject == id else TrustLevel.UNTRUSTED
        if trust is TrustLevel.UNTRUSTED:
            self._log("auth_fail", id=str(id), attempted=op)
            raise AuthFailed(f"{op} of {id}: credential rejected")
        return trust

    # authoritative registry

    def home_core_for(self, edge: Optional[str]) -> str:
        cores = self.topology.core_clouds
        if edge is None:
            return cores[0]
        return self.topology.nearest(edge, cores) or cores[0]

    def register(self, id: ObjectId, locator: NetworkAddress, credential: Credential,
                 registering_edge: Optional[str] = None) -> MappingEntry:
        if registering_edge is not None:
            self.topology.node(registering_edge)
        trust = self._check(id, credential, "register")
        if id in self._registry:
            self._log("register_dup", id=str(id))
            raise AlreadyRegistered(str(id))
        entry = MappingEntry(id, locator, 1, self.engine.now, trust, self.home_core_for(registering_edge))
        self._registry[id] = entry
        self._log("register", id=str(id), locator=str(locator), version=1, core=entry.home_core)
        return entry

    def update_locator(self, id: ObjectId, new_locator: NetworkAddress, credential: Credential) -> MappingEntry:
        trust = self._check(id, credential, "update")
        old = self._registry.get(id)
        if old is None:
            raise UnknownId(str(id))
        entry = replace(old, locator=new_locator, version=old.version + 1, trust=trust)
        self._registry[id] = entry
        self._log("update", id=str(id), locator=str(new_locator), version=entry.version)
        return entry

    def lookup(self, id: ObjectId) -> MappingEntry:
        """Authoritative entry (cloud-internal; never handed to ends)."""
        try:
            return self._registry[id]
        except KeyError:
            raise UnknownId(str(id)) from None

    def core_latency_us(self, edge: str) -> int:
        lat = self._core_latency.get(edge)
        if lat is None:
            core = self.topology.nearest(edge, self.topology.core_clouds)
            lat = self._core_latency[edge] = self.topology.latency_us(edge, core)
        return lat

    def resolve(self, id: ObjectId, resolver_edge: str) -> Resolution:
        """Resolve at an edge cloud, filling its cache from the nearest core on a miss."""
        try:
            cache = self._caches[resolver_edge]
        except KeyError:
            self.topology.node(resolver_edge)
            raise UnknownNode(f"{resolver_edge!r} is not an edge cloud") from None
        now = self.engine.now
        cached = cache.get(id)
        if cached is not None:
            if now < cached.expires_at:
                cache.move_to_end(id)
                entry = cached.entry
                res = Resolution(entry.locator.external(), 0, Source.CACHE, entry.version)
                self._log("resolve", id=str(id), edge=resolver_edge, source="cache",
                          locator=str(res.locator), version=entry.version)
                return res
            del cache[id]
        entry = self._registry.get(id)
        if entry is None:
            self._log("resolve_unknown", id=str(id), edge=resolver_edge)
            raise UnknownId(str(id))
        latency = 2 * self.core_latency_us(resolver_edge)
        cache[id] = CacheEntry(entry, now + self.ttl_us)
        self._resolved_at[resolver_edge].add(id)
        while len(cache) > self.cache_bound:
            cache.popitem(last=False)
        res = Resolution(entry.locator.external(), latency, Source.CORE, entry.version)
        self._log("resolve", id=str(id), edge=resolver_edge, source="core",
                  locator=str(res.locator), version=entry.version, latency_us=latency)
        return res

    def cache_expiry(self, id: ObjectId, edge: str) -> Optional[int]:
        cached = self._caches.get(edge, {}).get(id)
        return None if cached is None else cached.expires_at

    # accounting

    def core_table_size(self) -> int:
        return len(self._registry)

    def cache_sizes(self) -> dict:
        return {edge: len(cache) for edge, cache in self._caches.items()}

    def distinct_resolved(self) -> dict:
        return {edge: len(ids) for edge, ids in self._resolved_at.items()}

    def export_log(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.log)
