"""Pure numpy implementations of the hot kernels.

Used when the compiled ``rfqkd._ext._kernels`` module is unavailable, and as
the reference the compiled versions are tested against.
"""

import numpy as np
from scipy import fft as sfft


def peak_xcorr_matrix(A, B):
    """max_tau |sum_n A[i, n] * B[j, n + tau]| for every row pair (i, j)."""
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    n1, n2 = A.shape[1], B.shape[1]
    nfft = sfft.next_fast_len(n1 + n2 - 1, real=True)
    fa = np.conj(sfft.rfft(A, nfft, axis=1))
    fb = sfft.rfft(B, nfft, axis=1)
    out = np.empty((A.shape[0], B.shape[0]))
    # one row of A at a time keeps the (rows x nfft) temporary small
    for i in range(A.shape[0]):
        r = sfft.irfft(fa[i] * fb, nfft, axis=1)
        lags = np.concatenate([r[:, nfft - (n1 - 1):], r[:, :n2]], axis=1) if n1 > 1 else r[:, :n2]
        out[i] = np.max(np.abs(lags), axis=1)
    return out


def energy_detect(x, window, threshold, refractory):
    """Start indices where the sliding ``window``-sample energy first exceeds
    ``threshold``; further crossings within ``refractory`` samples are ignored."""
    x = np.asarray(x, dtype=float)
    n = x.size - window + 1
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    e = c[window:] - c[:n]
    above = np.flatnonzero(e > threshold)
    hits = []
    last = None
    for i in above:
        if last is None or i - last >= refractory:
            hits.append(i)
            last = i
    return np.asarray(hits, dtype=np.int64)
