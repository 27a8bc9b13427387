import json

import pytest
from hypothesis import given, settings, strategies as st

from cybertwin.errors import BadLength, NegativeResource, OverAllocated, TopologyError, UnknownNode
from cybertwin.model import (
    IdFormat,
    Link,
    NetworkAddress,
    Node,
    NodeKind,
    ObjectId,
    ObjectKind,
    ResourceVector,
    Topology,
    Visibility,
    make_object_id,
    occupancy,
    path_latency,
)

from conftest import small_topology
from oracles import enumerate_path_latency

Z = ResourceVector()
CAP = ResourceVector(10, 10, 10)


def test_short48_thing_id():
    oid = make_object_id(ObjectKind.THING, IdFormat.SHORT48, bytes([1, 2, 3, 4, 5, 6]))
    assert oid.bits == bytes([1, 2, 3, 4, 5, 6])
    assert str(oid) == "thing:short48:010203040506"


def test_long128_id_equals_itself():
    oid = make_object_id(ObjectKind.HUMAN, IdFormat.LONG128, bytes(16))
    assert oid == oid
    assert oid == make_object_id(ObjectKind.HUMAN, IdFormat.LONG128, bytes(16))


def test_wrong_length_rejected():
    with pytest.raises(BadLength):
        make_object_id(ObjectKind.SERVICE, IdFormat.LONG128, bytes(5))


@given(st.sampled_from(list(ObjectKind)), st.sampled_from(list(IdFormat)), st.binary(min_size=16, max_size=16))
def test_id_text_roundtrip(kind, fmt, raw):
    oid = make_object_id(kind, fmt, raw[: fmt.nbytes])
    back = ObjectId.parse(str(oid))
    assert back == oid and hash(back) == hash(oid)


def test_address_text_roundtrip():
    a = NetworkAddress("e1")
    assert str(a) == "internal@e1"
    assert a.external() == NetworkAddress("e1", Visibility.EDGE_ENDPOINT)
    assert NetworkAddress.parse(str(a.external())) == a.external()


def test_single_link_latency():
    assert path_latency(small_topology(), "ap1", "e1") == 5


def test_two_link_latency_matches_enumeration():
    topo = small_topology()
    got = path_latency(topo, "ap1", "c1")
    links = [(l.a, l.b, l.latency_ms) for l in topo.links]
    assert got == enumerate_path_latency(links, "ap1", "c1") == 25


def test_disconnected_pair():
    nodes = [Node("e1", NodeKind.EDGE_CLOUD, "op", CAP), Node("e2", NodeKind.EDGE_CLOUD, "op", CAP)]
    assert path_latency(Topology(nodes, []), "e1", "e2") is None


def test_unknown_node():
    with pytest.raises(UnknownNode):
        small_topology().latency_us("ap1", "nowhere")


@st.composite
def random_topologies(draw):
    n_edge = draw(st.integers(1, 4))
    nodes = [Node(f"e{k}", NodeKind.EDGE_CLOUD, "op", CAP) for k in range(n_edge)]
    nodes += [Node("c0", NodeKind.CORE_CLOUD, "op", CAP), Node("c1", NodeKind.CORE_CLOUD, "op", CAP)]
    links = [Link("c0", "c1", draw(st.integers(1, 50)) * 1000, 1e9)]
    for k in range(n_edge):
        for c in ("c0", "c1"):
            if draw(st.booleans()):
                links.append(Link(f"e{k}", c, draw(st.integers(1, 50)) * 1000, 1e9))
        for j in range(k + 1, n_edge):
            if draw(st.booleans()):
                links.append(Link(f"e{k}", f"e{j}", draw(st.integers(1, 50)) * 1000, 1e9))
    return Topology(nodes, links)


@given(random_topologies())
@settings(max_examples=100, deadline=None)
def test_path_latency_matches_enumeration(topo):
    links = [(l.a, l.b, l.latency_us) for l in topo.links]
    for a in topo.nodes:
        for b in topo.nodes:
            want = 0 if a == b else enumerate_path_latency(links, a, b)
            assert topo.latency_us(a, b) == want
            if want is not None:
                assert topo.path(a, b)[0] == a and topo.path(a, b)[-1] == b


def test_occupancy_examples():
    cap = ResourceVector(10, 0, 0)
    assert occupancy(cap, Z, "computing") == 0.0
    assert occupancy(cap, ResourceVector(5, 0, 0), "computing") == 0.5
    with pytest.raises(OverAllocated):
        occupancy(cap, ResourceVector(11, 0, 0), "computing")


@given(st.integers(1, 1000), st.integers(0, 1000))
def test_occupancy_in_unit_interval(cap, used):
    if used > cap:
        return
    u = occupancy(ResourceVector(cap, 0, 0), ResourceVector(used, 0, 0), "computing")
    assert 0.0 <= u <= 1.0


def test_resource_vector_rules():
    with pytest.raises(NegativeResource):
        ResourceVector(-1, 0, 0)
    with pytest.raises(NegativeResource):
        ResourceVector(1, 0, 0) - ResourceVector(2, 0, 0)
    with pytest.raises(TypeError):
        ResourceVector(1.5, 0, 0)
    assert ResourceVector(4, 1, 0).shortfall(ResourceVector(1, 3, 0)) == ResourceVector(3, 0, 0)


def test_topology_validation():
    ap = Node("ap", NodeKind.ACCESS_POINT, "t", Z)
    e = Node("e", NodeKind.EDGE_CLOUD, "c", CAP)
    with pytest.raises(TopologyError):
        Topology([ap, e], [])  # AP without an edge
    with pytest.raises(TopologyError):
        Topology([ap, e], [Link("ap", "e", 0, 1e9)])
    with pytest.raises(TopologyError):
        Topology([Node("c0", NodeKind.CORE_CLOUD, "c", CAP), Node("c1", NodeKind.CORE_CLOUD, "c", CAP)], [])


def test_topology_json_roundtrip():
    topo = small_topology()
    back = Topology.from_json(json.loads(topo.dumps()))
    assert back.to_json() == topo.to_json()
    assert back.latency_us("ap3", "c1") == topo.latency_us("ap3", "c1")
