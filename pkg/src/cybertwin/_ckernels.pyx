# cython: language_level=3
"""Compiled kernels; same contracts as ``_pykernels``."""

from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL
cdef double INV53 = 1.0 / 9007199254740992.0

NO_PATH = -1


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


def mix64(z):
    cdef uint64_t w = <uint64_t>(z & 0xFFFFFFFFFFFFFFFF)
    return _mix(w)


def fnv1a64(const unsigned char[:] data):
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h = (h ^ data[i]) * FNV_PRIME
    return h


def draw_u64(key, counter):
    cdef uint64_t k = <uint64_t>(key & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t c = <uint64_t>(counter & 0xFFFFFFFFFFFFFFFF)
    return _mix(k + (c + 1) * GAMMA)


def fill_u64(key, start, Py_ssize_t n):
    cdef uint64_t k = <uint64_t>(key & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t c = <uint64_t>(start & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t i
    out = [0] * n
    for i in range(n):
        out[i] = _mix(k + (c + <uint64_t>i + 1) * GAMMA)
    return out


def fill_uniform(key, start, Py_ssize_t n):
    cdef uint64_t k = <uint64_t>(key & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t c = <uint64_t>(start & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t i
    out = [0.0] * n
    for i in range(n):
        out[i] = <double>(_mix(k + (c + <uint64_t>i + 1) * GAMMA) >> 11) * INV53
    return out


def association_changes(knot_t, knot_x, knot_y, ap_x, ap_y, int64_t step, int64_t t_end):
    cdef Py_ssize_t n_ap = len(ap_x)
    cdef Py_ssize_t n_knots = len(knot_t)
    cdef int64_t *kt = <int64_t *>malloc(n_knots * sizeof(int64_t))
    cdef double *kx = <double *>malloc(n_knots * sizeof(double))
    cdef double *ky = <double *>malloc(n_knots * sizeof(double))
    cdef double *ax = <double *>malloc(n_ap * sizeof(double))
    cdef double *ay = <double *>malloc(n_ap * sizeof(double))
    cdef Py_ssize_t i, j, k = 0, best, prev = -1
    cdef int64_t t = 0, t0, t1
    cdef double x, y, dx, dy, d, best_d, frac
    times = []
    aps = []
    if not (kt and kx and ky and ax and ay):
        free(kt); free(kx); free(ky); free(ax); free(ay)
        raise MemoryError()
    try:
        for i in range(n_knots):
            kt[i] = knot_t[i]
            kx[i] = knot_x[i]
            ky[i] = knot_y[i]
        for i in range(n_ap):
            ax[i] = ap_x[i]
            ay[i] = ap_y[i]
        while t <= t_end:
            if n_knots == 1:
                x = kx[0]
                y = ky[0]
            else:
                while k + 2 < n_knots and kt[k + 1] <= t:
                    k += 1
                t0 = kt[k]
                t1 = kt[k + 1]
                if t >= t1:
                    x = kx[k + 1]
                    y = ky[k + 1]
                else:
                    frac = <double>(t - t0) / <double>(t1 - t0)
                    x = kx[k] + (kx[k + 1] - kx[k]) * frac
                    y = ky[k] + (ky[k + 1] - ky[k]) * frac
            best = 0
            dx = x - ax[0]
            dy = y - ay[0]
            best_d = dx * dx + dy * dy
            for j in range(1, n_ap):
                dx = x - ax[j]
                dy = y - ay[j]
                d = dx * dx + dy * dy
                if d < best_d:
                    best_d = d
                    best = j
            if best != prev:
                times.append(t)
                aps.append(best)
                prev = best
            t += step
    finally:
        free(kt); free(kx); free(ky); free(ax); free(ay)
    return times, aps


cdef int _path_into(int64_t *par, Py_ssize_t src, Py_ssize_t v, int64_t *buf) nogil:
    """Writes the src->v node sequence into buf; returns its length."""
    cdef int n = 0, i
    cdef int64_t tmp
    while v != src:
        buf[n] = v
        n += 1
        v = par[v]
    buf[n] = src
    n += 1
    for i in range(n // 2):
        tmp = buf[i]
        buf[i] = buf[n - 1 - i]
        buf[n - 1 - i] = tmp
    return n


def all_pairs_paths(Py_ssize_t n, edge_a, edge_b, edge_w):
    cdef Py_ssize_t m = len(edge_a)
    cdef int64_t *w = <int64_t *>malloc((n * n + 1) * sizeof(int64_t))
    cdef int64_t *d = <int64_t *>malloc((n + 1) * sizeof(int64_t))
    cdef int64_t *par = <int64_t *>malloc((n + 1) * sizeof(int64_t))
    cdef char *done = <char *>malloc(n + 1)
    cdef int64_t *pa = <int64_t *>malloc((n + 2) * sizeof(int64_t))
    cdef int64_t *pb = <int64_t *>malloc((n + 2) * sizeof(int64_t))
    cdef Py_ssize_t s, u, v, e, i, a, b
    cdef int64_t nd, we
    cdef int la, lb, cmp
    if not (w and d and par and done and pa and pb):
        free(w); free(d); free(par); free(done); free(pa); free(pb)
        raise MemoryError()
    dist = []
    parent = []
    try:
        # dense adjacency, -1 = no link; parallel links keep the lighter one
        for i in range(n * n):
            w[i] = -1
        for e in range(m):
            a = edge_a[e]
            b = edge_b[e]
            we = edge_w[e]
            if w[a * n + b] == -1 or we < w[a * n + b]:
                w[a * n + b] = we
                w[b * n + a] = we
        for s in range(n):
            for v in range(n):
                d[v] = -1
                par[v] = -1
                done[v] = 0
            d[s] = 0
            while True:
                u = -1
                for v in range(n):
                    if not done[v] and d[v] != -1 and (u == -1 or d[v] < d[u]):
                        u = v
                if u == -1:
                    break
                done[u] = 1
                for v in range(n):
                    we = w[u * n + v]
                    if we == -1 or done[v]:
                        continue
                    nd = d[u] + we
                    if d[v] == -1 or nd < d[v]:
                        d[v] = nd
                        par[v] = u
                    elif nd == d[v] and par[v] != u:
                        la = _path_into(par, s, u, pa)
                        pa[la] = v
                        la += 1
                        lb = _path_into(par, s, v, pb)
                        cmp = 0
                        for i in range(la if la < lb else lb):
                            if pa[i] != pb[i]:
                                cmp = -1 if pa[i] < pb[i] else 1
                                break
                        if cmp == 0 and la < lb:
                            cmp = -1
                        if cmp < 0:
                            par[v] = u
            dist.append([d[v] for v in range(n)])
            parent.append([par[v] for v in range(n)])
    finally:
        free(w); free(d); free(par); free(done); free(pa); free(pb)
    return dist, parent
