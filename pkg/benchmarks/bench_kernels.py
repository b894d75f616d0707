"""Compiled vs numpy kernels for the power nonlinearity.

The last column is the dispatcher in ``nehari_fs.kernels``, which routes
non-(half-)integer exponents to numpy.

    python3 benchmarks/bench_kernels.py [--sizes 4096 65536 1048576] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from nehari_fs import _kernels_py
from nehari_fs import kernels

try:
    from nehari_fs import _kernels as compiled
except ImportError:
    compiled = None


def bench(impl, name, args, repeat):
    fn = getattr(impl, name)
    t = timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)
    return min(t)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[4096, 65536, 1048576])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--p", type=float, default=4.0)
    ap.add_argument("--q", type=float, default=3.0)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':14s} {'n':>9s} {'numpy ms':>10s} {'compiled ms':>12s} {'speedup':>8s} {'dispatch ms':>12s}")
    rng = np.random.default_rng(0)
    for n in args.sizes:
        u, v = rng.normal(size=n), rng.normal(size=n)
        b, g = np.ones(n), rng.uniform(0.5, 1.5, n)
        cases = {
            "power_sums": (u, b, g, args.p, args.q),
            "power_terms": (u, b, g, args.p, args.q),
            "power_pairing": (u, v, b, g, args.p, args.q),
        }
        for name, a in cases.items():
            tp = bench(_kernels_py, name, a, args.repeat)
            if compiled is None:
                print(f"{name:14s} {n:9d} {tp * 1e3:10.3f} {'-':>12s} {'-':>8s}")
                continue
            tc = bench(compiled, name, a, args.repeat)
            td = bench(kernels, name, a, args.repeat)
            print(f"{name:14s} {n:9d} {tp * 1e3:10.3f} {tc * 1e3:12.3f} {tp / tc:8.2f} {td * 1e3:12.3f}")


if __name__ == "__main__":
    main()
