"""Brute-force reference implementations the tests compare against.

Each oracle is written from the definition, not from the production code,
and favours obviousness over speed.
"""

from itertools import combinations


def enumerate_path_latency(links, src, dst):
    """Shortest latency by enumerating every simple path (tiny graphs only)."""
    adj = {}
    for a, b, w in links:
        adj.setdefault(a, []).append((b, w))
        adj.setdefault(b, []).append((a, w))
    best = None

    def walk(node, seen, total):
        nonlocal best
        if node == dst:
            best = total if best is None else min(best, total)
            return
        for nxt, w in adj.get(node, ()):
            if nxt not in seen:
                walk(nxt, seen | {nxt}, total + w)

    walk(src, {src}, 0)
    return best


def brute_preemption(contracts, need):
    """Smallest covering subset of preemptible contracts, lexicographic tie-break.

    Candidates are ordered by (priority, start, id); ``combinations`` yields
    subsets of each size in lexicographic index order, so the first cover
    found at the smallest size is the expected answer.
    """
    from cybertwin.cloudos import ContractState, Priority

    cands = sorted((c for c in contracts if c.priority < Priority.CRITICAL and c.state is ContractState.ACTIVE),
                   key=lambda c: (c.priority, c.start, c.id))
    need = need.as_tuple()
    for k in range(0, len(cands) + 1):
        for subset in combinations(cands, k):
            got = [sum(c.demand.as_tuple()[i] for c in subset) for i in range(3)]
            if all(g >= n for g, n in zip(got, need)):
                return list(subset)
    return None


class RegistryReplay:
    """Ground-truth name resolution from the registry event log alone.

    The log holds every accepted register/update in order. The authoritative
    mapping of an id is found by replaying the whole log; an edge's view is
    the mapping as of its last core fetch while that fetch is younger than
    the TTL.
    """

    def __init__(self, ttl_us, core_rtt_us):
        self.ttl_us = ttl_us
        self.core_rtt_us = dict(core_rtt_us)  # edge -> round trip to its core
        self.events = []  # (id, locator)
        self.fetches = {}  # (edge, id) -> [(time, locator, version)]

    def record(self, oid, locator):
        self.events.append((oid, locator))

    def authoritative(self, oid):
        locator, version = None, 0
        for eid, loc in self.events:
            if eid == oid:
                locator, version = loc, version + 1
        return locator, version

    def resolve(self, now, edge, oid):
        """``(source, locator, version, latency_us)`` the edge should answer with."""
        history = self.fetches.setdefault((edge, oid), [])
        if history:
            t, locator, version = history[-1]
            if now < t + self.ttl_us:
                return "cache", locator, version, 0
        locator, version = self.authoritative(oid)
        if version == 0:
            return None
        history.append((now, locator, version))
        return "core", locator, version, self.core_rtt_us[edge]


def source_schedule_completion(split, props, txs):
    """Completion time of a multi-source fetch as the max over per-source schedules."""
    finish = 0
    for n, p, tx in zip(split, props, txs):
        if n:
            finish = max(finish, 2 * p + n * tx)
    return finish


def internal_addresses(value):
    """Every string inside ``value`` (recursively) that names an internal address."""
    found = []
    if isinstance(value, str):
        if value.startswith("internal@"):
            found.append(value)
    elif isinstance(value, dict):
        for v in value.values():
            found.extend(internal_addresses(v))
    elif isinstance(value, (list, tuple)):
        for v in value:
            found.extend(internal_addresses(v))
    return found
