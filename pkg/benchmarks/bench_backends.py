"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--trials 3] [--out bench_backends.csv]

Both backends get identical inputs. Writes one CSV row per (kernel, size,
backend) and prints the compiled speedup.
"""

import argparse
import csv
import statistics
import time

import numpy as np

from ifkit import _backend
from ifkit.geometry import build_knn_index, build_mesh_index, icosphere

# (size, query count); mesh sizes are icosphere subdivision levels
CASES = {
    "knn_query": [(4000, 2000), (32000, 2000)],
    "mesh_closest": [(3, 2000), (4, 2000)],
    "hungarian": [(100, None), (200, None)],
    "auction_round": [(300, None), (600, None)],
}


def make_case(kernel, size, extra, rng):
    if kernel == "knn_query":
        index = build_knn_index(rng.normal(size=(size, 3)))
        q = rng.normal(size=(extra, 3))
        return lambda b: index.query(q, 3, backend=b)
    if kernel == "mesh_closest":
        index = build_mesh_index(icosphere(size))
        q = rng.uniform(-1.5, 1.5, (extra, 3))
        return lambda b: index.closest(q, backend=b)
    cost = rng.random((size, size))
    if kernel == "hungarian":
        return lambda b: _backend.get(b).hungarian(cost)
    order = rng.permutation(size).astype(np.int64)
    return lambda b: _backend.get(b).auction_round(cost, np.zeros(size), 1e-3, order.copy())


def time_call(fn, trials):
    out = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="bench_backends.csv")
    args = ap.parse_args(argv)

    backends = sorted(_backend.BACKENDS)
    if "compiled" not in backends:
        print("compiled extension not built; timing the python backend only")
    rows = []
    for kernel, sizes in CASES.items():
        for size, extra in sizes:
            fn = make_case(kernel, size, extra, np.random.default_rng(args.seed))
            best = {}
            for b in backends:
                times = time_call(lambda: fn(b), args.trials)
                best[b] = min(times)
                rows.append([kernel, size, b, f"{min(times):.6f}", f"{statistics.median(times):.6f}"])
            label = f"{kernel:14s} size {size:>6}"
            if len(best) == 2:
                print(f"{label}  python {best['python']:.4f}s  compiled {best['compiled']:.4f}s  "
                      f"x{best['python'] / best['compiled']:.1f}")
            else:
                print(f"{label}  python {best['python']:.4f}s")

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel", "size", "backend", "best_s", "median_s"])
        w.writerows(rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
