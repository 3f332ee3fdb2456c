# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``rfqkd._kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def peak_xcorr_matrix(A, B):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t m = a.shape[0], k = b.shape[0]
    cdef Py_ssize_t n1 = a.shape[1], n2 = b.shape[1]
    out = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, tau, n, lo, hi
    cdef double s, best
    with nogil:
        for i in range(m):
            for j in range(k):
                best = 0.0
                # r[tau] = sum_n a[i, n] * b[j, n + tau]
                for tau in range(-(n1 - 1), n2):
                    lo = 0 if tau >= 0 else -tau
                    hi = n1 if n1 < n2 - tau else n2 - tau
                    s = 0.0
                    for n in range(lo, hi):
                        s += a[i, n] * b[j, n + tau]
                    if fabs(s) > best:
                        best = fabs(s)
                o[i, j] = best
    return out


def energy_detect(x, Py_ssize_t window, double threshold, Py_ssize_t refractory):
    cdef double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0] - window + 1
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    hits = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] h = hits
    cdef Py_ssize_t i, count = 0, last = -1
    cdef double e = 0.0, c = 0.0, y, t
    # Kahan-compensated running sum: drift over long streams stays O(eps)
    for i in range(window):
        y = v[i] * v[i] - c
        t = e + y
        c = (t - e) - y
        e = t
    with nogil:
        for i in range(n):
            if i > 0:
                y = v[i + window - 1] * v[i + window - 1] - v[i - 1] * v[i - 1] - c
                t = e + y
                c = (t - e) - y
                e = t
            if e > threshold and (last < 0 or i - last >= refractory):
                h[count] = i
                count += 1
                last = i
    return hits[:count].copy()
