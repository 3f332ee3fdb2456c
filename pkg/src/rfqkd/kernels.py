"""Hot-kernel dispatch: compiled Cython core when built, numpy fallback otherwise.

The compiled correlation kernel sums directly in O(n1*n2) per pair, which
only beats the batched FFT for short records, so it is used below
``DIRECT_XCORR_MAX_WORK``. Set ``RFQKD_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

DIRECT_XCORR_MAX_WORK = 40 * 40

BACKEND = "python"
_compiled = None
if os.environ.get("RFQKD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ext import _kernels as _compiled
    except ImportError:
        _compiled = None
    else:
        BACKEND = "cython"

energy_detect = _compiled.energy_detect if _compiled else _kernels_py.energy_detect


def peak_xcorr_matrix(A, B):
    """Peak absolute cross-correlation for every (row of A, row of B) pair."""
    if _compiled is not None and A.shape[1] * B.shape[1] <= DIRECT_XCORR_MAX_WORK:
        return _compiled.peak_xcorr_matrix(A, B)
    return _kernels_py.peak_xcorr_matrix(A, B)


__all__ = ["BACKEND", "energy_detect", "peak_xcorr_matrix"]
