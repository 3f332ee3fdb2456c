"""Compiled vs pure-numpy timings for the two hot kernels.

    python benchmarks/bench_kernels.py [--repeat N]

The energy detector runs over a long synthetic stream with sparse pulses.
The correlation kernel runs on batches of unit-energy records at several
lengths, which shows where the direct sum stops beating the FFT path.
"""

import argparse
import timeit

import numpy as np

from rfqkd import _kernels_py

try:
    from rfqkd._ext import _kernels as compiled
except ImportError:
    compiled = None


def stream(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.01, n)
    for s in rng.integers(0, n - 200, n // 1500):
        x[s:s + 100] += 0.2 * np.exp(-np.arange(100) / 30)
    return x


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'kernel':<28}{'size':>12}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for n in (150_000, 1_500_000, 15_000_000):
        x = stream(n)
        thr = 64 * 0.01**2 * 6
        assert np.array_equal(_kernels_py.energy_detect(x, 64, thr, 640),
                              compiled.energy_detect(x, 64, thr, 640))
        tp = best(lambda: _kernels_py.energy_detect(x, 64, thr, 640), args.repeat)
        tc = best(lambda: compiled.energy_detect(x, 64, thr, 640), args.repeat)
        print(f"{'energy_detect':<28}{n:>12,}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>10.1f}")

    rng = np.random.default_rng(1)
    for length in (16, 40, 64, 256):
        A, B = rng.standard_normal((2, 32, length))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        B /= np.linalg.norm(B, axis=1, keepdims=True)
        assert np.allclose(_kernels_py.peak_xcorr_matrix(A, B), compiled.peak_xcorr_matrix(A, B))
        tp = best(lambda: _kernels_py.peak_xcorr_matrix(A, B), args.repeat)
        tc = best(lambda: compiled.peak_xcorr_matrix(A, B), args.repeat)
        print(f"{'peak_xcorr_matrix 32x32':<28}{length:>12}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
