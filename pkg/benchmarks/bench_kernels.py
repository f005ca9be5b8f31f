"""Compare the compiled and numpy kernels on the encode/decode hot loop.

    python benchmarks/bench_kernels.py [--values 100000] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from dnpr import _pykernels

try:
    from dnpr import _ckernels
except ImportError:
    _ckernels = None


def workload(size, seed=0):
    rng = np.random.default_rng(seed)
    theta = rng.normal(0, 0.3, size)
    i = rng.integers(1, 1000, size)
    j = rng.integers(1, 1000, size)
    return theta, i, j


def bench(mod, size, repeat):
    theta, i, j = workload(size)
    _, z = mod.encode_values(theta, i, j, 1e-3, 42, 1e-3, 1.0, True)
    enc = min(timeit.repeat(lambda: mod.encode_values(theta, i, j, 1e-3, 42, 1e-3, 1.0, True),
                            number=1, repeat=repeat))
    dec = min(timeit.repeat(lambda: mod.decode_values(z, i, j, 42, 1e-3, 1.0), number=1, repeat=repeat))
    return enc, dec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--values", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rows = [("numpy", *bench(_pykernels, args.values, args.repeat))]
    if _ckernels is not None:
        rows.append(("cython", *bench(_ckernels, args.values, args.repeat)))
    print(f"{args.values} values, best of {args.repeat}")
    print(f"{'backend':<8} {'encode ms':>10} {'decode ms':>10}")
    for name, enc, dec in rows:
        print(f"{name:<8} {enc * 1e3:>10.2f} {dec * 1e3:>10.2f}")
    if len(rows) == 2:
        print(f"speedup  {rows[0][1] / rows[1][1]:>10.2f}x {rows[0][2] / rows[1][2]:>9.2f}x")


if __name__ == "__main__":
    main()
