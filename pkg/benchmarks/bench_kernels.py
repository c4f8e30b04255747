"""Compare the compiled and numpy battery-ladder kernels.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one line per (kernel, size) with the best-of-repeat wall time of each
backend, the speed-up, and the max absolute difference between outputs.
"""

import argparse
import timeit

import numpy as np

from strongwork import _ladder_py

try:
    from strongwork import _ladder
except ImportError:  # extension not built
    _ladder = None


def _shift_inputs(rng, d, n, batch):
    C = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = rng.integers(-n // 4, n // 4, size=(d, d))
    phi = rng.normal(size=(d, n, batch)) + 1j * rng.normal(size=(d, n, batch))
    return C, m, phi


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _ladder is None:
        print("compiled extension not available; only the numpy backend can run")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18}{'size':>22}{'cython [ms]':>14}{'numpy [ms]':>14}{'speed-up':>10}{'max diff':>11}")
    for d, n, batch in [(2, 256, 2), (4, 512, 4), (4, 512, 64), (8, 1024, 8)]:
        C, m, phi = _shift_inputs(rng, d, n, batch)
        tc = _best(lambda: _ladder.shift_accumulate(C, m, phi), args.repeat)
        tp = _best(lambda: _ladder_py.shift_accumulate(C, m, phi), args.repeat)
        diff = np.max(np.abs(_ladder.shift_accumulate(C, m, phi) - _ladder_py.shift_accumulate(C, m, phi)))
        print(f"{'shift_accumulate':<18}{f'd={d} N={n} b={batch}':>22}{tc * 1e3:>14.3f}{tp * 1e3:>14.3f}{tp / tc:>10.2f}{diff:>11.1e}")
    for n, k in [(512, 16), (512, 256), (4096, 256)]:
        psi = rng.normal(size=n) + 1j * rng.normal(size=n)
        ks = rng.integers(-n // 2, n // 2, size=k)
        tc = _best(lambda: _ladder.shifted_overlaps(psi, ks), args.repeat)
        tp = _best(lambda: _ladder_py.shifted_overlaps(psi, ks), args.repeat)
        diff = np.max(np.abs(_ladder.shifted_overlaps(psi, ks) - _ladder_py.shifted_overlaps(psi, ks)))
        print(f"{'shifted_overlaps':<18}{f'N={n} shifts={k}':>22}{tc * 1e3:>14.3f}{tp * 1e3:>14.3f}{tp / tc:>10.2f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
