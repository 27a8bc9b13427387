from types import SimpleNamespace

import pytest
from hypothesis import given, settings, strategies as st

from cybertwin.cloudos import (
    CloudOS,
    ContractState,
    PricingParams,
    Priority,
    RejectReason,
    Rejection,
    credits,
    preemption_set,
    proportional_split,
    unit_price,
)
from cybertwin.errors import ContractRejected, NoPeering, RefusedCannotFit
from cybertwin.model import Link, Node, NodeKind, ResourceVector, ServiceDescriptor, Topology
from cybertwin.sim import Engine

from oracles import brute_preemption, source_schedule_completion

SECOND = 1_000_000


def rv(c, a=0, m=0):
    return ResourceVector(c, a, m)


def market(cap=(10, 10, 10), operator="op", funds=1000, **kw):
    topo = Topology([Node("e1", NodeKind.EDGE_CLOUD, operator, ResourceVector(*cap))], [])
    engine = Engine()
    cloud = CloudOS(engine, topo, **kw)
    engine.call(cloud.fund, "buyer", credits(funds))
    return engine, cloud


def sign(engine, cloud, demand, duration=SECOND, priority=Priority.STANDARD, bid_cap=None, agent="buyer"):
    return engine.call(cloud.request_contract, agent, "e1", demand, duration, priority, bid_cap)


# pricing


def test_price_floor_at_idle():
    assert unit_price(PricingParams.uniform(base=1.7, alpha=3.0), 0.0) == 1.7


def test_price_formula_at_half():
    assert unit_price(PricingParams.uniform(base=1.0, alpha=1.0), 0.5) == 2.0


def test_price_cap():
    assert unit_price(PricingParams.uniform(base=1.0, alpha=1.0, cap=50.0), 0.99) == 50.0
    assert unit_price(PricingParams.uniform(), 1.0) == 50.0


def test_pricing_params_validation():
    with pytest.raises(ValueError):
        PricingParams.uniform(base=5.0, cap=5.0)
    with pytest.raises(ValueError):
        PricingParams.uniform(alpha=-1.0)
    with pytest.raises(ValueError):
        unit_price(PricingParams.uniform(), 1.5)


@given(st.floats(0, 10), st.floats(0, 20), st.floats(1e-6, 100), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=500)
def test_price_monotone_floor_cap(base, alpha, extra, u1, u2):
    params = PricingParams.uniform(base=base, alpha=alpha, cap=base + extra)
    lo, hi = sorted((u1, u2))
    assert unit_price(params, 0.0) == base
    assert unit_price(params, lo) <= unit_price(params, hi) <= base + extra


# contracts


def test_contract_on_idle_pool_costs_one_credit():
    engine, cloud = market()
    c = sign(engine, cloud, rv(1))
    assert c.state is ContractState.ACTIVE
    assert c.total == credits(1)
    assert cloud.ledger.balance("buyer") == credits(999)
    assert cloud.ledger.balance("op:op") == credits(1)


def test_quote_uses_occupancy_before_admission():
    engine, cloud = market()
    sign(engine, cloud, rv(5))
    c = sign(engine, cloud, rv(1))
    assert c.unit_prices[0] == 2.0  # u = 0.5 with base 1, alpha 1


def test_insufficient_without_preemptible_contracts():
    engine, cloud = market(cap=(2, 2, 2))
    sign(engine, cloud, rv(2), priority=Priority.CRITICAL)
    r = sign(engine, cloud, rv(1), priority=Priority.CRITICAL)
    assert isinstance(r, Rejection) and r.reason is RejectReason.INSUFFICIENT
    with pytest.raises(RefusedCannotFit):
        engine.call(cloud.reallocate_on_scarcity, cloud.pools["e1"], rv(1))


def test_price_too_high_changes_nothing():
    engine, cloud = market()
    entries = list(cloud.ledger.entries)
    r = sign(engine, cloud, rv(1), bid_cap=credits(0.5))
    assert isinstance(r, Rejection) and r.reason is RejectReason.PRICE_TOO_HIGH
    assert cloud.ledger.entries == entries
    assert cloud.pools["e1"].allocated == ResourceVector()
    assert not cloud.contracts


def test_insufficient_funds():
    engine, cloud = market(funds=0)
    r = sign(engine, cloud, rv(1))
    assert r.reason is RejectReason.INSUFFICIENT_FUNDS and not bool(r)


def test_critical_preempts_three_best_effort():
    engine, cloud = market(cap=(4, 4, 4))
    small = [sign(engine, cloud, rv(1), 10 * SECOND, Priority.BEST_EFFORT) for _ in range(3)]
    assert cloud.pools["e1"].free == rv(1, 4, 4)
    before = cloud.ledger.balance("buyer")
    big = sign(engine, cloud, rv(4), SECOND, Priority.CRITICAL)
    assert big.state is ContractState.ACTIVE
    assert all(c.state is ContractState.PREEMPTED for c in small)
    refunds = sum(c.total for c in small)  # preempted at elapsed 0: full refund
    assert cloud.ledger.balance("buyer") == before + refunds - big.total
    assert cloud.capacity_safe() and cloud.allocations_consistent()


def test_preemption_refund_is_prorated():
    engine, cloud = market(cap=(1, 1, 1))
    c = sign(engine, cloud, rv(1), 10 * SECOND, Priority.STANDARD)
    engine.run_until(4 * SECOND)
    before = cloud.ledger.balance("buyer")
    engine.call(cloud.reallocate_on_scarcity, cloud.pools["e1"], rv(1))
    assert cloud.ledger.balance("buyer") - before == c.total * 6 // 10
    assert c.ended_at == 4 * SECOND


def test_expiry_is_half_open():
    engine, cloud = market()
    c = sign(engine, cloud, rv(3), 10_000)
    engine.run_until(9_999)
    assert c.state is ContractState.ACTIVE
    engine.run_until(10_000)
    assert c.state is ContractState.EXPIRED and c.ended_at == 10_000
    assert cloud.pools["e1"].allocated == ResourceVector()


def test_simultaneous_expiry_releases_both():
    engine, cloud = market()
    a = sign(engine, cloud, rv(2), 5_000)
    b = sign(engine, cloud, rv(3), 5_000)
    expired = cloud.expire_contracts(5_000)
    assert expired == [a, b]
    assert cloud.pools["e1"].allocated == ResourceVector() and not cloud.pools["e1"].contracts


@st.composite
def pools(draw):
    out = []
    for k in range(draw(st.integers(0, 6))):
        out.append(SimpleNamespace(id=k + 1, priority=draw(st.sampled_from(list(Priority))),
                                   start=draw(st.integers(0, 3)), state=ContractState.ACTIVE,
                                   demand=rv(*draw(st.tuples(*[st.integers(0, 3)] * 3)))))
    need = rv(*draw(st.tuples(*[st.integers(0, 6)] * 3)))
    return out, need


@given(pools())
@settings(max_examples=500)
def test_preemption_set_matches_exhaustive_search(case):
    contracts, need = case
    got = preemption_set(contracts, need)
    want = brute_preemption(contracts, need)
    assert (got is None) == (want is None)
    if got is not None:
        assert [c.id for c in got] == [c.id for c in want]


# peering


def peered_market(sigma=0.8):
    topo = Topology([Node("e1", NodeKind.EDGE_CLOUD, "foreign", ResourceVector(2, 2, 2))], [])
    engine = Engine()
    cloud = CloudOS(engine, topo, peering={("home", "foreign"): sigma})
    engine.call(cloud.fund, "buyer", credits(100))
    return engine, cloud


def test_peering_split():
    engine, cloud = peered_market()
    c = engine.call(cloud.cross_operator_request, "buyer", "home", "e1", rv(1), 10 * SECOND)
    assert c.total == credits(10)
    assert cloud.ledger.balance("op:foreign") == credits(8)
    assert cloud.ledger.balance("op:home") == credits(2)
    assert cloud.ledger.balance("buyer") == credits(90)
    assert cloud.ledger.total() == 0


def test_no_peering():
    engine, cloud = peered_market()
    with pytest.raises(NoPeering):
        engine.call(cloud.cross_operator_request, "buyer", "elsewhere", "e1", rv(1), SECOND)


def test_foreign_pool_full_propagates():
    engine, cloud = peered_market()
    engine.call(cloud.cross_operator_request, "buyer", "home", "e1", rv(2), SECOND)
    r = engine.call(cloud.cross_operator_request, "buyer", "home", "e1", rv(1), SECOND)
    assert isinstance(r, Rejection) and r.reason is RejectReason.INSUFFICIENT


# placement


def placement_world(edge_cap=(10, 10, 10), core_cap=(10, 10, 10)):
    rate = 1_000_000.0
    nodes = [Node("e1", NodeKind.EDGE_CLOUD, "op", ResourceVector(10, 10, 10), bandwidth=rate),
             Node("e2", NodeKind.EDGE_CLOUD, "op", ResourceVector(*edge_cap), bandwidth=rate),
             Node("c1", NodeKind.CORE_CLOUD, "op", ResourceVector(*core_cap), bandwidth=rate)]
    links = [Link("e1", "e2", 5_000, rate), Link("e1", "c1", 25_000, rate)]
    engine = Engine()
    cloud = CloudOS(engine, Topology(nodes, links), max_sources=2, chunk_size=10_000)
    engine.call(cloud.fund, "twin", credits(1000))
    twin = SimpleNamespace(host="e1", wallet="twin")
    return engine, cloud, twin


def test_single_replica_covers_all_chunks():
    engine, cloud, twin = placement_world()
    svc = ServiceDescriptor("s", ("c1",), 100_000)
    plan = engine.call(cloud.place_service, twin, svc, 100_000)
    assert [(s.node, s.chunks) for s in plan.sources] == [("c1", tuple(range(10)))]


def test_equal_bandwidth_splits_evenly_and_beats_either_source():
    engine, cloud, twin = placement_world()
    svc = ServiceDescriptor("s", ("e2", "c1"), 100_000)
    plan = engine.call(cloud.place_service, twin, svc, 100_000)
    assert [(s.node, len(s.chunks)) for s in plan.sources] == [("e2", 5), ("c1", 5)]
    props = [s.prop_us for s in plan.sources]
    txs = [s.tx_us for s in plan.sources]
    assert props == [5_000, 25_000] and txs == [10_000, 10_000]
    chosen = source_schedule_completion([5, 5], props, txs)
    assert chosen < source_schedule_completion([10, 0], props, txs)
    assert chosen < source_schedule_completion([0, 10], props, txs)


def test_placement_rejection_is_atomic():
    engine, cloud, twin = placement_world(core_cap=(0, 0, 0))
    svc = ServiceDescriptor("s", ("e2", "c1"), 100_000)
    entries = len(cloud.ledger.entries)
    with pytest.raises(ContractRejected):
        engine.call(cloud.place_service, twin, svc, 100_000)
    assert len(cloud.ledger.entries) == entries
    assert all(p.allocated == ResourceVector() for p in cloud.pools.values())


@given(st.integers(0, 200), st.lists(st.floats(0.1, 100), min_size=1, max_size=5))
def test_proportional_split_sums_and_rounds(n, weights):
    shares = proportional_split(n, weights)
    assert sum(shares) == n
    total = sum(weights)
    assert all(abs(s - n * w / total) < 1 for s, w in zip(shares, weights))


# ledger


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 4), st.integers(1, 3_000_000),
                          st.sampled_from(list(Priority)), st.integers(0, 2_000_000)), max_size=40))
@settings(max_examples=100, deadline=None)
def test_ledger_conserved_and_capacity_safe(ops):
    engine, cloud = market(cap=(5, 5, 5), funds=50)
    for agent_k, c, dur, prio, wait in ops:
        engine.run_until(engine.now + wait)
        sign(engine, cloud, rv(c), dur, prio, agent=("buyer", "buyer", "x", "y")[agent_k])
        assert cloud.ledger.total() == 0
        assert cloud.capacity_safe() and cloud.allocations_consistent()
        assert cloud.ledger.replayed_balances() == {k: v for k, v in cloud.ledger.balances.items()}


def test_ledger_csv_columns():
    engine, cloud = market()
    sign(engine, cloud, rv(1))
    lines = cloud.ledger.to_csv().splitlines()
    assert lines[0] == "time,debit,credit,amount,reason"
    assert lines[-1] == "0,buyer,op:op,1.000000,contract:1"
