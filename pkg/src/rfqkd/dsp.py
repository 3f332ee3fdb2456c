"""Signal-processing chain for captured avalanche transients.

Order of the chain: brickwall FFT band excision, energy-maximal time
excision down to 256 samples, unit-energy normalization. Around it sit the
correlation analysis (co-location / cross-location matrices and their
separability), trigger-aligned coherent averaging and a free-running
energy detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from . import kernels
from .emission import WaveformRecord

UNIT_ENERGY_TOL = 1e-6


@dataclass(frozen=True)
class BandSpec:
    f_low: float = 30e6
    f_high: float = 300e6

    def __post_init__(self):
        if not 0 <= self.f_low < self.f_high:
            raise ValueError(f"band requires 0 <= f_low < f_high, got [{self.f_low}, {self.f_high}]")

    def validate(self, sample_rate: float):
        if self.f_high > sample_rate / 2:
            raise ValueError(f"band edge {self.f_high} Hz exceeds Nyquist ({sample_rate / 2} Hz)")


def band_mask(n: int, sample_rate: float, band: BandSpec) -> np.ndarray:
    """Boolean mask over rfft bins of an n-point transform; edge bins are kept."""
    band.validate(sample_rate)
    k = np.arange(n // 2 + 1)
    lo = band.f_low * n / sample_rate
    hi = band.f_high * n / sample_rate
    eps = 1e-9
    return (k >= lo - eps) & (k <= hi + eps)


def excise_frequency_array(x, sample_rate: float, band: BandSpec) -> np.ndarray:
    """Band excision along the last axis of a 1-D or 2-D array."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    spec = sfft.rfft(x, axis=-1)
    spec[..., ~band_mask(n, sample_rate, band)] = 0.0
    return sfft.irfft(spec, n, axis=-1)


def frequency_excision(w: WaveformRecord, band: BandSpec = BandSpec()) -> WaveformRecord:
    """Zero every DFT bin outside [f_low, f_high] and transform back."""
    return w.replace(excise_frequency_array(w.samples, w.sample_rate, band))


def best_window_start(x, out_len: int) -> int:
    """Start of the first contiguous ``out_len`` window with maximal energy."""
    x = np.asarray(x, dtype=float)
    if out_len <= 0:
        raise ValueError("out_len must be > 0")
    if out_len > x.size:
        raise ValueError(f"out_len {out_len} exceeds record length {x.size}")
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    e = c[out_len:] - c[: x.size - out_len + 1]
    return int(np.argmax(e))


def time_excision(w: WaveformRecord, out_len: int = 256) -> WaveformRecord:
    """Crop to the ``out_len``-sample window holding the most energy."""
    start = best_window_start(w.samples, out_len)
    trig = w.trigger_index
    if trig is not None:
        trig = trig - start if start <= trig < start + out_len else None
    out = w.replace(w.samples[start:start + out_len].copy(), trigger_index=trig)
    out.meta["window_start"] = start
    return out


def normalize(w: WaveformRecord, mode: str = "unit_energy") -> WaveformRecord:
    """Scale a waveform by its energy.

    ``unit_energy`` divides by sqrt(sum s^2) so the result has unit energy;
    ``literal_power`` divides by sum s^2 itself.
    """
    e = w.energy
    if not e > 0:
        raise ValueError("cannot normalize a zero-energy waveform")
    if mode == "unit_energy":
        return w.replace(w.samples / math.sqrt(e))
    if mode == "literal_power":
        return w.replace(w.samples / e)
    raise ValueError(f"unknown normalization mode {mode!r}")


def preprocess(w: WaveformRecord, band: BandSpec = BandSpec(), out_len: int = 256) -> WaveformRecord:
    """Full chain: frequency excision -> time excision -> unit-energy normalization."""
    return normalize(time_excision(frequency_excision(w, band), out_len))


def preprocess_array(X, sample_rate: float, band: BandSpec = BandSpec(), out_len: int = 256):
    """Row-wise :func:`preprocess` for a (records x samples) array."""
    X = excise_frequency_array(np.atleast_2d(X), sample_rate, band)
    out = np.empty((X.shape[0], out_len))
    for i, row in enumerate(X):
        s = best_window_start(row, out_len)
        seg = row[s:s + out_len]
        e = float(np.dot(seg, seg))
        if not e > 0:
            raise ValueError(f"record {i} has zero energy after excision")
        out[i] = seg / math.sqrt(e)
    return out


# --- correlation analysis ----------------------------------------------------

def correlation_lags(n1: int, n2: int) -> np.ndarray:
    """Lag axis matching :func:`cross_correlation` output."""
    return np.arange(-(n1 - 1), n2)


def cross_correlation(w1, w2) -> np.ndarray:
    """Full linear cross-correlation r[tau] = sum_n w1[n] * w2[n + tau].

    Index k of the result is lag ``k - (len(w1) - 1)``, so a copy of ``w1``
    delayed by d samples peaks at lag +d.
    """
    if isinstance(w1, WaveformRecord) and isinstance(w2, WaveformRecord):
        if w1.sample_rate != w2.sample_rate:
            raise ValueError("cross_correlation needs equal sample rates")
    a = np.asarray(getattr(w1, "samples", w1), dtype=float)
    b = np.asarray(getattr(w2, "samples", w2), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("cross_correlation of an empty sequence")
    n1, n2 = a.size, b.size
    nfft = sfft.next_fast_len(n1 + n2 - 1, real=True)
    r = sfft.irfft(np.conj(sfft.rfft(a, nfft)) * sfft.rfft(b, nfft), nfft)
    return np.concatenate([r[nfft - (n1 - 1):] if n1 > 1 else r[:0], r[:n2]])


def correlation_peak(r) -> float:
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        raise ValueError("correlation_peak of an empty sequence")
    return float(np.max(np.abs(r)))


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    kind: str  # "co" | "cross"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("correlation matrix must be square")
        if self.kind not in ("co", "cross"):
            raise ValueError(f"kind must be 'co' or 'cross', got {self.kind!r}")
        if np.any(self.values < 0):
            raise ValueError("correlation peaks must be >= 0")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _stack_unit(ws, name):
    if len(ws) == 0:
        raise ValueError(f"{name} is empty")
    X = np.vstack([np.asarray(getattr(w, "samples", w), dtype=float) for w in ws])
    e = np.sum(X * X, axis=1)
    if np.any(np.abs(e - 1) > UNIT_ENERGY_TOL):
        raise ValueError(f"{name} must be unit-energy normalized (see dsp.normalize)")
    return X


def correlation_matrix(setA, setB, kind: str | None = None) -> CorrelationMatrix:
    """values[i, j] = peak |R_ij[tau]| between A[i] and B[j].

    ``kind`` defaults to ``"co"`` when both sets are the same object or carry
    one common detector label, otherwise ``"cross"``.
    """
    A = _stack_unit(setA, "setA")
    B = A if setB is setA else _stack_unit(setB, "setB")
    if kind is None:
        labels = {getattr(w, "label", None) for w in list(setA) + list(setB)}
        kind = "co" if setA is setB or (len(labels) == 1 and None not in labels) else "cross"
    vals = kernels.peak_xcorr_matrix(A, B)
    if setB is setA:
        vals = 0.5 * (vals + vals.T)
    return CorrelationMatrix(vals, kind)


@dataclass(frozen=True)
class SeparabilityReport:
    min_co: float
    max_cross: float
    margin: float
    separable: bool
    threshold: float


def separability_margin(m_co: CorrelationMatrix, m_cross: CorrelationMatrix,
                        exclude_diagonal: bool = True) -> SeparabilityReport:
    """min(co-location entries) - max(cross-location entries).

    Self-pairs on the co-location diagonal are skipped when ``exclude_diagonal``.
    """
    co = np.asarray(getattr(m_co, "values", m_co), dtype=float)
    cross = np.asarray(getattr(m_cross, "values", m_cross), dtype=float)
    if co.size == 0 or cross.size == 0:
        raise ValueError("empty correlation matrix")
    if exclude_diagonal and co.ndim == 2 and co.shape[0] == co.shape[1] and co.shape[0] > 1:
        co = co[~np.eye(co.shape[0], dtype=bool)]
    min_co = float(np.min(co))
    max_cross = float(np.max(cross))
    margin = min_co - max_cross
    return SeparabilityReport(min_co, max_cross, margin, margin > 0, 0.5 * (min_co + max_cross))


# --- averaging and detection -------------------------------------------------

def coherent_average(ws) -> WaveformRecord:
    """Sample-wise mean of trigger-aligned captures."""
    if not ws:
        raise ValueError("coherent_average of an empty list")
    n = len(ws[0])
    if any(len(w) != n for w in ws):
        raise ValueError("coherent_average needs equal-length records")
    trig = ws[0].trigger_index
    if any(w.trigger_index != trig for w in ws):
        raise ValueError("records are not trigger-aligned")
    if any(w.sample_rate != ws[0].sample_rate for w in ws):
        raise ValueError("records have different sample rates")
    mean = np.mean(np.vstack([w.samples for w in ws]), axis=0)
    labels = {w.label for w in ws}
    return ws[0].replace(mean, label=labels.pop() if len(labels) == 1 else None)


@dataclass(frozen=True)
class DetectionConfig:
    """Free-running detector settings.

    The noise floor comes from ``noise_floor`` (mean, std of the windowed
    energy) if given, else from ``noise_sigma`` assuming white Gaussian
    noise, else it is measured on the first ``quiet_len`` samples.
    """

    window: int = 64
    k: float = 5.0
    refractory: int = 256
    segment_len: int = 256
    quiet_len: int = 256
    edge_k: float = 6.0
    noise_sigma: float | None = None
    noise_floor: tuple | None = None


def windowed_energy(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    return c[window:] - c[: x.size - window + 1]


def estimate_noise_floor(quiet, window: int) -> tuple[float, float]:
    """(mean, std) of the sliding-window energy over noise-only samples.

    ``quiet`` is one array or a list of arrays (pooled).
    """
    chunks = [quiet] if np.ndim(quiet) == 1 else list(quiet)
    e = np.concatenate([windowed_energy(q, window) for q in chunks if len(q) >= window])
    if e.size < 2:
        raise ValueError(f"need at least {window + 1} quiet samples to estimate the noise floor")
    return float(np.mean(e)), float(np.std(e))


def detect_pulses(stream: WaveformRecord, cfg: DetectionConfig = DetectionConfig()):
    """Trigger-free energy detector.

    Fires where the ``cfg.window``-sample energy exceeds mean + k*std of the
    noise floor. Each hit is refined to the leading edge (first sample above
    ``edge_k`` noise sigmas) and yields ``(index, segment)``, where the
    segment is the energy-maximal ``segment_len`` window after the edge.
    """
    x = stream.samples
    W = cfg.window
    if x.size < W:
        raise ValueError(f"stream of {x.size} samples shorter than detection window {W}")
    if cfg.noise_floor is not None:
        mu, sd = cfg.noise_floor
    elif cfg.noise_sigma is not None:
        mu, sd = W * cfg.noise_sigma**2, cfg.noise_sigma**2 * math.sqrt(2 * W)
    else:
        mu, sd = estimate_noise_floor(x[: cfg.quiet_len], W)
    sigma = math.sqrt(max(mu, 0.0) / W)
    threshold = mu + cfg.k * sd

    out = []
    for i in kernels.energy_detect(x, W, threshold, cfg.refractory):
        i = int(i)
        region = np.abs(x[i:i + W])
        over = np.flatnonzero(region > cfg.edge_k * sigma)
        edge = i + int(over[0] if over.size else np.argmax(region))
        lo = max(0, edge - W)
        hi = min(x.size, edge + cfg.refractory + W)
        seg_len = min(cfg.segment_len, hi - lo)
        seg = time_excision(stream.replace(x[lo:hi], trigger_index=None), seg_len)
        seg.meta["window_start"] += lo
        out.append((edge, seg))
    return out
