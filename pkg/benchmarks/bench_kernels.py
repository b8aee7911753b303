"""Time the compiled and numpy kernel backends on random plan supports.

    python3 benchmarks/bench_kernels.py [--sizes 10 20 40] [--repeat 3]
"""
import argparse
import time

import numpy as np

from wienermonge.kernels import available_backends
from wienermonge.transport import cost_matrix


def _inputs(p, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(p, 3))
    Y = rng.uniform(size=(p, 3))
    C = cost_matrix(X, Y)
    pts = np.vstack([X, Y])
    D = cost_matrix(pts, pts)
    pairs = np.column_stack([np.arange(p), np.arange(p, 2 * p)]).astype(np.int64)
    return C, D, pairs


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the numpy backend only")
    print(f"{'kernel':<22}{'P':>5}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for p in args.sizes:
        C, D, pairs = _inputs(p, p)
        jobs = {
            "zero_cycle_endpoints": lambda m: m.zero_cycle_endpoints(C, 3, 1e-9),
            "worst_cycle": lambda m: m.worst_cycle(C, 3),
            "ray_relation": lambda m: m.ray_relation(D, pairs, 1e-9),
        }
        for name, job in jobs.items():
            times = {b: _best(lambda: job(mod), args.repeat) for b, mod in backends.items()}
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:<22}{p:>5}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
                  + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
