"""Scenario driver: build the world, replay a workload, aggregate metrics."""

from __future__ import annotations

import gc
import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

from ..cloudos import CloudOS, PricingParams, credits
from ..errors import ContractRejected, NoEdgeCapacity
from ..model import Topology
from ..naming import NameService
from ..sim import Engine
from ..twin import CybertwinNetwork
from .baseline import BaselineNetwork
from .metrics import MetricsReport, availability, mean, p95, timeseries_csv
from .workload import Workload, WorkloadEvent, WorkloadSpec, generate_workload

MODES = ("cybertwin", "baseline")


@dataclass
class ScenarioConfig:
    workload: WorkloadSpec
    topology: Optional[Topology] = None  # None: grid built from the workload's layout
    services: Optional[tuple] = None  # None: generated catalog
    script: Optional[tuple] = None  # explicit events replacing generated mobility and requests
    pricing: dict = field(default_factory=dict)  # operator -> PricingParams
    default_pricing: PricingParams = PricingParams()
    peering: dict = field(default_factory=dict)
    ttl_ms: float = 500.0
    cache_bound: int = 4096
    reassociation_ms: float = 20.0
    grace_ms: float = 50.0
    dwell_ms: float = 100.0
    migration: bool = True
    max_sources: int = 2
    end_funds: float = 100_000.0  # credits

    @property
    def seed(self) -> int:
        return self.workload.seed

    def with_seed(self, seed: int) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, workload=replace(self.workload, seed=seed))

    def build_workload(self) -> Workload:
        if self.script is None:
            return generate_workload(self.workload, self.topology, self.services)
        if self.topology is None or self.services is None:
            raise ValueError("a scripted scenario needs an explicit topology and services")
        events = sorted(self.script, key=lambda e: e.time)
        ends = tuple(dict.fromkeys(e.end for e in events))
        return Workload(self.topology, tuple(self.services), ends, list(events))


class MigrationPolicy:
    """Move a twin next to its end once the detour has lasted ``dwell_us``.

    A detour is an end->twin latency above ``factor`` times the latency to
    the best edge cloud from the end's access point.
    """

    def __init__(self, net: CybertwinNetwork, dwell_us: int = 100_000, factor: int = 2):
        self.net = net
        self.dwell_us = dwell_us
        self.factor = factor
        self._tokens = {}
        self._best = {}
        net.on_reconnect = self.check
        net.on_settled = self.check

    def best_edge(self, ap: str) -> str:
        best = self._best.get(ap)
        if best is None:
            best = self._best[ap] = self.net.topology.nearest(ap, self.net.topology.edge_clouds)
        return best

    def wanted(self, end) -> Optional[str]:
        if not end.connected or end.serving is None:
            return None
        target = self.best_edge(end.ap)
        if self.net.lat(end.ap, end.serving.host) > self.factor * self.net.lat(end.ap, target):
            return target
        return None

    def check(self, end) -> None:
        if self.wanted(end) is None:
            return
        token = self._tokens[end.name] = self._tokens.get(end.name, 0) + 1
        self.net.engine.schedule(self.dwell_us, self._fire, end, token)

    def _fire(self, end, token: int) -> None:
        if self._tokens.get(end.name) != token:
            return
        if end.migrating() or len(end.active_twins()) > 1:
            return
        target = self.wanted(end)
        if target is None:
            return
        try:
            self.net.migrate(end.serving, target)
        except NoEdgeCapacity as exc:
            self.net.engine.emit("policy", "migration_refused", end=end.name, target=target, reason=str(exc))


@dataclass
class ScenarioResult:
    mode: str
    config: ScenarioConfig
    workload: Workload
    engine: Engine
    naming: NameService
    cloud: CloudOS
    network: object
    report: MetricsReport

    def trace_ndjson(self) -> str:
        return self.engine.trace_ndjson()

    def ledger_csv(self) -> str:
        return self.cloud.ledger.to_csv()

    def contracts_ndjson(self) -> str:
        return self.cloud.contract_log()

    def registry_ndjson(self) -> str:
        return self.naming.export_log()

    def timeseries_csv(self) -> str:
        net = self.network
        return timeseries_csv(net.deliveries, net.handoffs, net.migrations, self.config.workload.horizon_us)

    def delivered_to_ends(self) -> list:
        """Trace records addressed to an end."""
        return [r for r in self.engine.trace if "to" in r.detail]


@contextmanager
def _gc_paused():
    """Suspend the cyclic collector for the duration of a run.

    A run allocates many short-lived records that reference counting frees
    on its own; periodic cycle scans of them cost about a fifth of the run.
    The collector is restored (and catches up) afterwards.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


class Scenario:
    def __init__(self, config: ScenarioConfig, mode: str = "cybertwin"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.config = config
        self.mode = mode

    def run(self) -> ScenarioResult:
        workload, engine, naming, cloud, net = self.execute()
        report = collect(self.mode, self.config, workload, engine, naming, cloud, net)
        return ScenarioResult(self.mode, self.config, workload, engine, naming, cloud, net, report)

    def execute(self):
        """Replay the workload to the horizon; ``(workload, engine, naming, cloud, network)``."""
        cfg = self.config
        workload = cfg.build_workload()
        topo = workload.topology
        engine = Engine(cfg.seed)
        naming = NameService(engine, topo, ttl_us=int(cfg.ttl_ms * 1000), cache_bound=cfg.cache_bound)
        cloud = CloudOS(engine, topo, pricing=cfg.pricing, default_pricing=cfg.default_pricing,
                        peering=cfg.peering, max_sources=cfg.max_sources, chunk_size=cfg.workload.chunk_size)
        reassoc = int(cfg.reassociation_ms * 1000)
        horizon = cfg.workload.horizon_us
        if self.mode == "cybertwin":
            net = CybertwinNetwork(engine, topo, naming, cloud, reassociation_us=reassoc,
                                   grace_us=int(cfg.grace_ms * 1000), twin_lease_us=horizon + 1_000_000)
            if cfg.migration:
                MigrationPolicy(net, int(cfg.dwell_ms * 1000))
        else:
            net = BaselineNetwork(engine, topo, naming, cloud, reassociation_us=reassoc)

        def setup():
            for svc in workload.services:
                if self.mode == "cybertwin":
                    net.register_service(svc)
                else:
                    net.services[svc.name] = svc
            for name in workload.ends:
                net.add_end(name, funds=credits(cfg.end_funds))

        engine.at(0, setup)
        for ev in workload.events:
            engine.at(ev.time, self._dispatch, net, ev)
        with _gc_paused():
            engine.run_until(horizon)
        if self.mode == "baseline":
            net.finalize(horizon)
        return workload, engine, naming, cloud, net

    @staticmethod
    def _dispatch(net, ev: WorkloadEvent) -> None:
        if ev.op == "attach":
            net.attach(ev.end, ev.ap)
        elif ev.op == "handoff":
            end = net.ends[ev.end]
            if end.ap is None:
                net.attach(ev.end, ev.ap)
            else:
                net.handoff(ev.end, ev.ap)
        elif ev.op == "request":
            try:
                net.request_service(ev.end, ev.service, ev.nbytes)
            except ContractRejected:
                pass  # recorded on the delivery record and in the trace
        else:
            raise ValueError(f"unknown workload op {ev.op!r}")


def collect(mode, cfg, workload, engine, naming, cloud, net) -> MetricsReport:
    horizon = cfg.workload.horizon_us
    deliveries = net.deliveries
    chunk = cloud.chunk_size
    fb = [d.first_byte_us / 1000 for d in deliveries if d.first_byte_us is not None]
    done = [d for d in deliveries if d.completion_us is not None and d.issued_at + d.completion_us <= horizon]
    requested = sum(d.chunks for d in deliveries)
    if mode == "cybertwin":
        landed = [sum(1 for t in d.land_times if t <= horizon) for d in deliveries]
        retx = net.retransmitted_bytes()
        dup = net.duplicate_fetch_bytes
        violations = len(net.continuity_violations())
        migrations = sum(1 for m in net.migrations if m.completed_at is not None)
    else:
        landed = [net.all_sessions[d.session].distinct_chunks() for d in deliveries]
        retx = net.retransmitted_bytes
        dup = 0
        violations = 0
        migrations = 0
    delivered = sum(landed)
    finals = [h.interruption_ms for h in net.handoffs if h.interruption_ms is not None]
    balances = cloud.ledger.replayed_balances()
    return MetricsReport(
        mode=mode,
        seed=cfg.seed,
        n_ends=len(workload.ends),
        horizon_ms=horizon / 1000,
        requests=len(deliveries),
        completed=len(done),
        rejected=sum(1 for d in deliveries if d.status == "rejected"),
        mean_first_byte_ms=mean(fb),
        p95_first_byte_ms=p95(fb),
        mean_completion_ms=mean(d.completion_us / 1000 for d in done),
        handoffs=len(net.handoffs),
        mid_transfer_handoffs=sum(1 for h in net.handoffs if h.mid_transfer),
        mean_interruption_ms=mean(finals),
        migrations=migrations,
        core_table_size=naming.core_table_size(),
        edge_cache_sizes=naming.cache_sizes(),
        edge_distinct_resolved=naming.distinct_resolved(),
        requested_chunks=requested,
        delivered_chunks=delivered,
        availability=availability(delivered, requested),
        requested_bytes=sum(d.nbytes for d in deliveries),
        delivered_bytes=sum(min(d.nbytes, n * chunk) for d, n in zip(deliveries, landed)),
        retransmitted_bytes=retx,
        duplicate_fetch_bytes=dup,
        continuity_violations=violations,
        ledger_totals=cloud.ledger.totals_by_class(),
        ledger_drift=sum(balances.values()),
        events=engine.fired,
        trace_records=len(engine.trace),
        determinism_hash=engine.trace_hash(),
    )


def run_scenario(config: ScenarioConfig) -> MetricsReport:
    return Scenario(config, "cybertwin").run().report


def baseline_end_to_end(config: ScenarioConfig) -> MetricsReport:
    return Scenario(config, "baseline").run().report


def compare(config: ScenarioConfig) -> dict:
    """Both models on the same config, side by side."""
    return {mode: Scenario(config, mode).run().report.to_json() for mode in MODES}


def dumps_compare(reports: dict) -> str:
    return json.dumps(reports, indent=2, sort_keys=True)
