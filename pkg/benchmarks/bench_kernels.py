"""Benchmark the numba kernels against the pure-numpy fallbacks.

The package selects a backend at import time (RIDEMATCH_NO_NUMBA=1 forces
numpy); this script times both implementations directly, so it reports the
speedup regardless of the active backend.

Usage: python benchmarks/bench_kernels.py [--rows 2000] [--dim 256] [--reps 5]
"""

import argparse
import time

import numpy as np

from ridematch import accel
from ridematch.roadnet import build_city_network


def _time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rotate3(rows, dim, reps):
    rng = np.random.default_rng(0)
    signs = rng.integers(0, 2, size=(3, dim)).astype(np.float64) * 2 - 1
    x = rng.normal(size=(rows, dim))
    out = {}
    if accel.NUMBA_AVAILABLE:
        accel.rotate3(x.copy(), signs)  # compile outside the timer
        out["numba"] = _time(lambda: accel.rotate3(x.copy(), signs), reps)
    out["numpy"] = _time(lambda: accel.rotate3_numpy(x.copy(), signs), reps)
    return out


def bench_top2(rows, dim, reps):
    rng = np.random.default_rng(1)
    y = rng.normal(size=(rows, dim))
    out = {}
    if accel.NUMBA_AVAILABLE:
        accel.top2_abs(y)
        out["numba"] = _time(lambda: accel.top2_abs(y), reps)
    out["numpy"] = _time(lambda: accel.top2_abs_numpy(y.copy()), reps)
    return out


def bench_dijkstra(reps):
    net = build_city_network(40, 40, 500.0, seed=3)
    args = (net.indptr, net.edge_v, net.edge_duration)
    sources = list(range(0, net.n_nodes, 7))
    out = {}
    if accel.NUMBA_AVAILABLE:
        accel.dijkstra_csr(*args, 0)
        out["numba"] = _time(lambda: [accel.dijkstra_csr(*args, s) for s in sources], reps)
    out["numpy"] = _time(lambda: [accel.dijkstra_csr_numpy(*args, s) for s in sources], reps)
    return out, len(sources)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {accel.ACTIVE_BACKEND}")
    print(f"{'kernel':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")

    def report(name, res):
        nb = res.get("numba")
        nume = res["numpy"]
        nb_s = f"{nb * 1e3:.2f} ms" if nb is not None else "-"
        ratio = f"{nume / nb:.1f}x" if nb else "-"
        print(f"{name:<28}{nb_s:>12}{nume * 1e3:>10.2f} ms{ratio:>9}")

    report(f"rotate3 ({args.rows}x{args.dim})", bench_rotate3(args.rows, args.dim, args.reps))
    report(f"top2_abs ({args.rows}x{args.dim})", bench_top2(args.rows, args.dim, args.reps))
    dij, nsrc = bench_dijkstra(args.reps)
    report(f"dijkstra (40x40 grid, {nsrc} src)", dij)


if __name__ == "__main__":
    main()
