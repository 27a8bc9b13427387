"""Compare the compiled and pure-Python kernel backends on realistic inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is timed with the best of N repeats; outputs of both backends are
checked for equality before timing.
"""

import argparse
import timeit

from cybertwin import kernels
from cybertwin.harness.workload import WorkloadSpec, grid_topology, waypoint_knots
from cybertwin.rng import Stream


def cases():
    spec = WorkloadSpec(seed=3)
    topo = grid_topology(spec)
    aps = topo.access_points
    ap_x = [topo.node(a).position[0] for a in aps]
    ap_y = [topo.node(a).position[1] for a in aps]
    ts, xs, ys = waypoint_knots(spec, Stream.from_seed(3, "mobility/bench"))
    big = grid_topology(WorkloadSpec(seed=3, ap_grid=(12, 12), edge_grid=(6, 6), n_cores=4))
    order = sorted(big.nodes)
    idx = {n: i for i, n in enumerate(order)}
    ea = [idx[l.a] for l in big.links]
    eb = [idx[l.b] for l in big.links]
    ew = [l.latency_us for l in big.links]
    blob = bytes(range(256)) * 4096
    key = 0x1234_5678_9ABC_DEF0
    return {
        "fill_uniform(100k)": lambda k: k.fill_uniform(key, 0, 100_000),
        "fill_u64(100k)": lambda k: k.fill_u64(key, 0, 100_000),
        "association_changes(300 s @100 ms)": lambda k: k.association_changes(
            ts, xs, ys, ap_x, ap_y, 100_000, spec.horizon_us),
        f"all_pairs_paths({len(order)} nodes)": lambda k: k.all_pairs_paths(len(order), ea, eb, ew),
        "fnv1a64(1 MiB)": lambda k: k.fnv1a64(blob),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled backend not built; only the Python backend is available")
    print(f"{'kernel':40} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for name, fn in cases().items():
        outs = [fn(m) for m in backends.values()]
        assert all(o == outs[0] for o in outs), f"backends disagree on {name}"
        times = []
        for mod in backends.values():
            number = 1
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(best)
        speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
        print(f"{name:40} " + " ".join(f"{t * 1000:10.2f}ms" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()
