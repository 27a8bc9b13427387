"""Pure-Python kernels.

Reference implementation of the hot loops. ``_ckernels.pyx`` mirrors every
function here and must return identical values (the tests compare both).
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_INV53 = 1.0 / 9007199254740992.0

NO_PATH = -1


def mix64(z):
    """SplitMix64 finalizer on a 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data):
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def draw_u64(key, counter):
    return mix64((key + (counter + 1) * GAMMA) & MASK64)


def fill_u64(key, start, n):
    """Draws ``start .. start+n-1`` of the counter stream ``key``."""
    out = []
    append = out.append
    for i in range(start, start + n):
        z = (key + (i + 1) * GAMMA) & MASK64
        z = ((z ^ (z >> 30)) * _M1) & MASK64
        z = ((z ^ (z >> 27)) * _M2) & MASK64
        append(z ^ (z >> 31))
    return out


def fill_uniform(key, start, n):
    return [(u >> 11) * _INV53 for u in fill_u64(key, start, n)]


def association_changes(knot_t, knot_x, knot_y, ap_x, ap_y, step, t_end):
    """Nearest-AP association sampled along a piecewise-linear trajectory.

    ``knot_t`` are strictly increasing integer times with ``knot_t[0] == 0``;
    positions between knots are linear. The trajectory is sampled every
    ``step`` time units from 0 to ``t_end`` inclusive and the nearest access
    point is computed at each sample (ties go to the lower index). Returns
    ``(times, aps)`` listing the first sample and every sample whose nearest
    AP differs from the previous one.
    """
    n_ap = len(ap_x)
    n_knots = len(knot_t)
    times = []
    aps = []
    prev = -1
    k = 0
    t = 0
    while t <= t_end:
        if n_knots == 1:
            x = knot_x[0]
            y = knot_y[0]
        else:
            while k + 2 < n_knots and knot_t[k + 1] <= t:
                k += 1
            t0 = knot_t[k]
            t1 = knot_t[k + 1]
            if t >= t1:
                x = knot_x[k + 1]
                y = knot_y[k + 1]
            else:
                frac = (t - t0) / (t1 - t0)
                x = knot_x[k] + (knot_x[k + 1] - knot_x[k]) * frac
                y = knot_y[k] + (knot_y[k + 1] - knot_y[k]) * frac
        best = 0
        dx = x - ap_x[0]
        dy = y - ap_y[0]
        best_d = dx * dx + dy * dy
        for j in range(1, n_ap):
            dx = x - ap_x[j]
            dy = y - ap_y[j]
            d = dx * dx + dy * dy
            if d < best_d:
                best_d = d
                best = j
        if best != prev:
            times.append(t)
            aps.append(best)
            prev = best
        t += step
    return times, aps


def _path(parent_row, src, v):
    seq = []
    while v != src:
        seq.append(v)
        v = parent_row[v]
    seq.append(src)
    seq.reverse()
    return seq


def all_pairs_paths(n, edge_a, edge_b, edge_w):
    """Minimum-latency paths between all node pairs of an undirected graph.

    Node indices must be assigned in lexicographic node-id order: among
    equal-weight paths the lexicographically smallest index sequence wins.
    Weights are positive integers. Returns ``(dist, parent)`` as ``n x n``
    nested lists; ``dist[s][v] == -1`` when ``v`` is unreachable from ``s``
    and ``parent[s][v]`` is the predecessor of ``v`` on the chosen path
    (``-1`` for ``v == s`` or unreachable).
    """
    adj = [[] for _ in range(n)]
    for a, b, w in zip(edge_a, edge_b, edge_w):
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = []
    parent = []
    for s in range(n):
        d = [NO_PATH] * n
        par = [NO_PATH] * n
        done = [False] * n
        d[s] = 0
        while True:
            u = -1
            for v in range(n):
                if not done[v] and d[v] != NO_PATH and (u == -1 or d[v] < d[u]):
                    u = v
            if u == -1:
                break
            done[u] = True
            for v, w in adj[u]:
                if done[v]:
                    continue
                nd = d[u] + w
                if d[v] == NO_PATH or nd < d[v]:
                    d[v] = nd
                    par[v] = u
                elif nd == d[v] and par[v] != u:
                    if _path(par, s, u) + [v] < _path(par, s, v):
                        par[v] = u
        dist.append(d)
        parent.append(par)
    return dist, parent
