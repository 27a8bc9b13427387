import csv
import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from cybertwin.errors import InvalidSpec
from cybertwin.harness import Scenario, ScenarioConfig, WorkloadSpec, walkthrough
from cybertwin.harness.metrics import MetricsReport, p95, render_table
from cybertwin.harness.workload import WorkloadEvent, generate_workload, grid_topology

from conftest import service, small_topology

CHUNK = 65536


# workload


def test_rate_zero_gives_mobility_only():
    w = generate_workload(WorkloadSpec(seed=1, request_rate=0.0, horizon_s=60.0))
    assert w.events and {e.op for e in w.events} <= {"attach", "handoff"}
    assert not w.requests()


def test_same_seed_same_events():
    spec = WorkloadSpec(seed=5, horizon_s=60.0)
    assert generate_workload(spec).events == generate_workload(spec).events
    assert generate_workload(spec).events != generate_workload(WorkloadSpec(seed=6, horizon_s=60.0)).events


@pytest.mark.parametrize("seed", range(5))
def test_request_count_is_poisson(seed):
    w = generate_workload(WorkloadSpec(seed=seed, n_ends=10, request_rate=1.0, horizon_s=10.0))
    # mean 100, sigma 10
    assert 70 <= len(w.requests()) <= 130


def test_every_end_attaches_first():
    w = generate_workload(WorkloadSpec(seed=2, horizon_s=120.0))
    first = {}
    for e in w.events:
        first.setdefault(e.end, e.op)
    assert set(first.values()) == {"attach"} and len(first) == 10
    assert [e.time for e in w.events] == sorted(e.time for e in w.events)


def test_static_ends_never_move():
    w = generate_workload(WorkloadSpec(seed=3, mobility="static", horizon_s=60.0))
    assert [e.op for e in w.events if e.op != "request"] == ["attach"] * 10


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        WorkloadSpec(seed=None)
    with pytest.raises(InvalidSpec):
        WorkloadSpec(seed=1, request_rate=-1.0)
    with pytest.raises(InvalidSpec):
        WorkloadSpec(seed=1, size_chunks=(0, 3))


def test_grid_layout():
    topo = grid_topology(WorkloadSpec(seed=0))
    assert len(topo.access_points) == 16 and len(topo.edge_clouds) == 4 and len(topo.core_clouds) == 2
    assert topo.latency_us(topo.access_points[0], topo.core_clouds[0]) == 25_000
    assert grid_topology(WorkloadSpec(seed=9)) is topo  # seed does not change the layout


# scenarios


def test_walkthrough_steps_in_order():
    result = Scenario(walkthrough.config()).run()
    times = walkthrough.step_times(result.engine.trace)
    assert walkthrough.steps_in_order(result.engine.trace)
    assert list(times) == [step for step, _ in walkthrough.STEPS]
    fb = {d.service: d.first_byte_latency for d in result.network.deliveries}
    assert fb == walkthrough.EXPECTED_FIRST_BYTE_MS
    assert result.report.migrations == 1


def test_static_scenario_has_no_handoffs_or_migrations():
    cfg = ScenarioConfig(WorkloadSpec(seed=4, mobility="static", horizon_s=60.0, request_rate=0.2))
    report = Scenario(cfg).run().report
    assert report.handoffs == 0 and report.migrations == 0 and report.requests > 0


def test_rerun_gives_same_hash():
    cfg = ScenarioConfig(WorkloadSpec(seed=8, horizon_s=30.0))
    for mode in ("cybertwin", "baseline"):
        assert Scenario(cfg, mode).run().report.determinism_hash == \
            Scenario(cfg, mode).run().report.determinism_hash


def scripted(replicas, events, core_bw=1e9):
    spec = WorkloadSpec(seed=0, n_ends=1, horizon_s=5.0)
    return ScenarioConfig(spec, topology=small_topology(core_bw=core_bw),
                          services=(service("s", replicas, 10, origin="c1"),), script=tuple(events),
                          migration=False)


def both(cfg):
    return Scenario(cfg, "cybertwin").run(), Scenario(cfg, "baseline").run()


def test_static_first_byte_edge_replica_vs_origin():
    cfg = scripted(["e1", "c1"], [WorkloadEvent(0, "a", "attach", "ap1"),
                                  WorkloadEvent(10_000, "a", "request", None, "s", 10 * CHUNK)])
    ct, bl = both(cfg)
    assert ct.report.mean_first_byte_ms == 10.0
    assert bl.report.mean_first_byte_ms == 50.0  # ap1 -> c1 is 25 ms each way


def test_mid_transfer_handoff_retransmits_only_in_baseline():
    # c1 streams one chunk per 10 ms; by 82 ms the baseline end holds three chunks
    cfg = scripted(["c1"], [WorkloadEvent(0, "a", "attach", "ap1"),
                            WorkloadEvent(0, "a", "request", None, "s", 10 * CHUNK),
                            WorkloadEvent(82_000, "a", "handoff", "ap2")], core_bw=6_553_600.0)
    ct, bl = both(cfg)
    assert bl.report.mid_transfer_handoffs == 1
    assert bl.report.retransmitted_bytes == 3 * CHUNK
    assert ct.report.retransmitted_bytes == 0
    assert ct.report.delivered_chunks == bl.report.delivered_chunks == 10


def test_origin_only_without_handoffs_models_coincide():
    cfg = scripted(["c1"], [WorkloadEvent(0, "a", "attach", "ap1"),
                            WorkloadEvent(5_000, "a", "request", None, "s", 10 * CHUNK)])
    ct, bl = both(cfg)
    assert ct.report.mean_first_byte_ms == bl.report.mean_first_byte_ms == 50.0


def test_baseline_on_walkthrough():
    bl = Scenario(walkthrough.config(), "baseline").run().report
    assert bl.retransmitted_bytes > 0 and bl.mid_transfer_handoffs >= 1


def test_migration_switch_off():
    cfg = walkthrough.config()
    cfg.migration = False
    assert Scenario(cfg).run().report.migrations == 0


@given(st.integers(0, 10_000), st.sampled_from(["cybertwin", "baseline"]))
@settings(max_examples=15, deadline=None)
def test_report_invariants(seed, mode):
    cfg = ScenarioConfig(WorkloadSpec(seed=seed, n_ends=4, horizon_s=40.0, request_rate=0.2))
    result = Scenario(cfg, mode).run()
    r = result.report
    assert 0.0 <= r.availability <= 1.0
    assert r.delivered_bytes <= r.requested_bytes
    assert r.delivered_chunks <= r.requested_chunks
    assert r.ledger_drift == 0
    n_services = len(result.workload.services)
    if mode == "cybertwin":
        assert r.core_table_size == n_services + r.n_ends
        assert r.continuity_violations == 0
    for edge, size in r.edge_cache_sizes.items():
        assert size <= r.edge_distinct_resolved[edge]


@pytest.mark.parametrize("mode", ["cybertwin", "baseline"])
def test_delivered_equals_requested_when_nothing_is_cut(mode):
    # every walkthrough transfer finishes well before the 3 s horizon
    r = Scenario(walkthrough.config(), mode).run().report
    assert r.completed == r.requests == 2
    assert r.delivered_bytes == r.requested_bytes


# metrics


def test_p95_and_json_roundtrip():
    assert p95([]) is None
    assert p95(range(1, 101)) == 95
    report = Scenario(walkthrough.config()).run().report
    assert MetricsReport.from_json(json.loads(report.dumps())) == report


def test_timeseries_csv():
    text = Scenario(walkthrough.config()).run().timeseries_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0][0].startswith("t")
    assert len(rows) > 2


def test_table_has_delta_column():
    a = {"mode": "cybertwin", "mean_first_byte_ms": 10.0}
    b = {"mode": "baseline", "mean_first_byte_ms": 50.0}
    table = render_table({"baseline": b, "cybertwin": a})
    head = table.splitlines()[0].split()
    assert head == ["metric", "cybertwin", "baseline", "delta"]
    row = next(line for line in table.splitlines() if line.startswith("first-byte latency (mean)"))
    assert row.split()[-3:] == ["10.00", "50.00", "-40.00"]
