import os
import subprocess
import sys

import numpy as np
import pytest

from rfqkd import _kernels_py, kernels

try:
    from rfqkd._ext import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def detect_loop(x, window, threshold, refractory):
    hits, last = [], None
    for i in range(len(x) - window + 1):
        e = sum(v * v for v in x[i:i + window])
        if e > threshold and (last is None or i - last >= refractory):
            hits.append(i)
            last = i
    return hits


def peak_loop(a, b):
    best = 0.0
    for tau in range(-(len(a) - 1), len(b)):
        s = sum(a[n] * b[n + tau] for n in range(len(a)) if 0 <= n + tau < len(b))
        best = max(best, abs(s))
    return best


def _pulsed(seed, n=3000):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, n)
    for s in rng.integers(0, n - 50, 6):
        x[s:s + 40] += 6
    return x


@pytest.mark.parametrize("impl", ["python", pytest.param("compiled", marks=needs_ext)])
def test_energy_detect_matches_loop(impl):
    fn = _kernels_py.energy_detect if impl == "python" else compiled.energy_detect
    for seed in range(4):
        x = _pulsed(seed, 600)
        ref = detect_loop(x, 16, 120.0, 50)
        assert list(fn(x, 16, 120.0, 50)) == ref


@pytest.mark.parametrize("impl", ["python", pytest.param("compiled", marks=needs_ext)])
def test_peak_xcorr_matches_loop(impl):
    fn = _kernels_py.peak_xcorr_matrix if impl == "python" else compiled.peak_xcorr_matrix
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 17))
    B = rng.standard_normal((4, 23))
    ref = [[peak_loop(a, b) for b in B] for a in A]
    assert np.allclose(fn(A, B), ref, atol=1e-11)


@needs_ext
def test_backends_agree_on_long_inputs():
    x = _pulsed(7, 200000)
    assert np.array_equal(compiled.energy_detect(x, 64, 400.0, 256),
                          _kernels_py.energy_detect(x, 64, 400.0, 256))
    rng = np.random.default_rng(2)
    A, B = rng.standard_normal((5, 256)), rng.standard_normal((6, 256))
    assert np.allclose(compiled.peak_xcorr_matrix(A, B), _kernels_py.peak_xcorr_matrix(A, B),
                       rtol=1e-10, atol=1e-10)


def test_short_stream_yields_nothing():
    for fn in filter(None, (_kernels_py.energy_detect, getattr(compiled, "energy_detect", None))):
        assert fn(np.ones(5), 10, 0.5, 3).size == 0


def test_dispatch_reports_backend():
    assert kernels.BACKEND == ("cython" if compiled is not None else "python")


def test_env_var_forces_fallback():
    env = dict(os.environ, RFQKD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from rfqkd import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
