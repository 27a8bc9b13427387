import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cybertwin.cloudos import CloudOS  # noqa: E402
from cybertwin.model import Link, Node, NodeKind, ResourceVector, ServiceDescriptor, Topology  # noqa: E402
from cybertwin.naming import NameService  # noqa: E402
from cybertwin.sim import Engine  # noqa: E402
from cybertwin.twin import CybertwinNetwork  # noqa: E402

CAP = ResourceVector(100, 100, 100)
NONE = ResourceVector(0, 0, 0)
BIG = ResourceVector(1000, 1000, 1000)


def small_topology(core_bw=1e9, edge_bw=1e9, edge_edge_ms=10, access_ms=5, edge_core_ms=20):
    """ap1, ap2 -> e1; ap3 -> e2; e1-e2; each edge to its core; cores linked."""
    a, ec, ee = access_ms * 1000, edge_core_ms * 1000, edge_edge_ms * 1000
    nodes = [
        Node("ap1", NodeKind.ACCESS_POINT, "telecom", NONE),
        Node("ap2", NodeKind.ACCESS_POINT, "telecom", NONE),
        Node("ap3", NodeKind.ACCESS_POINT, "telecom", NONE),
        Node("e1", NodeKind.EDGE_CLOUD, "cloud", CAP),
        Node("e2", NodeKind.EDGE_CLOUD, "cloud", CAP),
        Node("c1", NodeKind.CORE_CLOUD, "cloud", BIG),
        Node("c2", NodeKind.CORE_CLOUD, "cloud", BIG),
    ]
    links = [
        Link("ap1", "e1", a, 1e9),
        Link("ap2", "e1", a, 1e9),
        Link("ap3", "e2", a, 1e9),
        Link("e1", "e2", ee, edge_bw),
        Link("e1", "c1", ec, core_bw),
        Link("e2", "c2", ec, core_bw),
        Link("c1", "c2", 10_000, 1e9),
    ]
    return Topology(nodes, links)


class World:
    def __init__(self, topology=None, services=(), **net_kw):
        self.topo = topology or small_topology()
        self.engine = Engine(0)
        self.naming = NameService(self.engine, self.topo)
        self.cloud = CloudOS(self.engine, self.topo)
        self.net = CybertwinNetwork(self.engine, self.topo, self.naming, self.cloud, services, **net_kw)

    def at(self, t_ms, fn, *args):
        box = []
        self.engine.at(int(t_ms * 1000), lambda: box.append(fn(*args)))
        return box

    def run(self, t_ms):
        self.engine.run_until(int(t_ms * 1000))


@pytest.fixture
def world():
    return World


def service(name, replicas, chunks, origin=None, chunk=65536):
    return ServiceDescriptor(name, tuple(replicas), chunks * chunk, origin=origin)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
