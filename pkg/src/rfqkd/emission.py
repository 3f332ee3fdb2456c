"""Avalanche discharge, radiated impulse and per-detector channel fingerprints.

Antenna-received waveforms are modelled as the sampled avalanche current
pulse passed through a detector-specific FIR channel, delayed by an integer
number of samples, with additive white Gaussian noise and digitizer
quantization on top.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

SPEED_OF_LIGHT_CGS = 2.99792458e10  # cm/s

DEFAULT_RESONANCES = ((65e6, 4e6), (140e6, 4e6), (225e6, 4e6))


@dataclass(frozen=True)
class AvalanchePulseSpec:
    """Shape of the APD discharge current I_D(t).

    ``shape`` selects the waveform family: ``"exp_gauss"`` (causal exponential
    decay convolved with a unit-area Gaussian, the physical default),
    ``"exponential"`` (no Gaussian smoothing) or ``"rectangular"`` (constant
    ``peak_current`` for ``decay_tau`` seconds, used as a test pulse).
    """

    peak_current: float = 10e-3
    decay_tau: float = 5e-9
    gauss_sigma: float = 0.5e-9
    t_rise: float = 15e-9
    t_fall: float = 80e-9
    onset: float = 20e-9
    shape: str = "exp_gauss"

    def __post_init__(self):
        if self.shape not in ("exp_gauss", "exponential", "rectangular"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if not self.peak_current >= 0:
            raise ValueError("peak_current must be >= 0")
        if not self.decay_tau > 0:
            raise ValueError("decay_tau must be > 0")
        if self.t_rise < 0 or self.onset < 0:
            raise ValueError("t_rise and onset must be >= 0")
        if not self.t_rise < self.t_fall:
            raise ValueError(f"t_rise ({self.t_rise}) must be < t_fall ({self.t_fall})")
        if self.shape == "exp_gauss":
            if not self.gauss_sigma > 0:
                raise ValueError("gauss_sigma must be > 0")
            if not self.gauss_sigma < self.decay_tau:
                raise ValueError("gauss_sigma must be < decay_tau")


@dataclass(frozen=True)
class PointChargeKinematics:
    charge: float
    acceleration: float
    speed_ratio: float = 0.0
    light_speed: float = SPEED_OF_LIGHT_CGS

    def __post_init__(self):
        if self.charge < 0:
            raise ValueError("charge must be >= 0")
        if not self.light_speed > 0:
            raise ValueError("light_speed must be > 0")


@dataclass(frozen=True)
class ChannelFingerprint:
    taps: np.ndarray
    delay_samples: int = 0
    resonances: tuple = ()
    seed: int | None = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("fingerprint needs at least one tap")
        if not np.sum(taps**2) > 0:
            raise ValueError("fingerprint tap energy must be > 0")
        if self.delay_samples < 0:
            raise ValueError("delay_samples must be >= 0")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "delay_samples", int(self.delay_samples))
        object.__setattr__(self, "resonances", tuple(tuple(r) for r in self.resonances))

    @property
    def energy(self) -> float:
        return float(np.dot(self.taps, self.taps))


@dataclass(frozen=True)
class NoiseSpec:
    thermal_sigma: float = 2e-3
    digitizer_bits: int = 8
    full_scale: float = 0.5

    def __post_init__(self):
        if self.thermal_sigma < 0:
            raise ValueError("thermal_sigma must be >= 0")
        if not 4 <= self.digitizer_bits <= 24:
            raise ValueError("digitizer_bits must be in [4, 24]")
        if not self.full_scale > 0:
            raise ValueError("full_scale must be > 0")

    @property
    def lsb(self) -> float:
        return self.full_scale / 2**self.digitizer_bits


@dataclass
class WaveformRecord:
    samples: np.ndarray
    sample_rate: float = 1e9
    trigger_index: int | None = None
    label: int | None = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if self.trigger_index is not None:
            self.trigger_index = int(self.trigger_index)
            if not 0 <= self.trigger_index < self.samples.size:
                raise ValueError("trigger_index out of bounds")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError("label must be 0, 1 or None")

    def __len__(self):
        return self.samples.size

    @property
    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def replace(self, samples, **changes) -> "WaveformRecord":
        kw = dict(sample_rate=self.sample_rate, trigger_index=self.trigger_index,
                  label=self.label)
        kw.update(changes)
        return WaveformRecord(samples, **kw)


# --- avalanche current -------------------------------------------------------

def _emg_unit(x, tau, sigma):
    """exp(-x/tau)*H(x) convolved with a unit-area Gaussian of width sigma."""
    x = np.asarray(x, dtype=float)
    z = (sigma / tau - x / sigma) / math.sqrt(2.0)
    out = np.empty_like(x)
    pos = z >= 0
    # erfcx keeps the product finite where exp() alone would overflow
    out[pos] = 0.5 * np.exp(-x[pos] ** 2 / (2 * sigma**2)) * special.erfcx(z[pos])
    xn = x[~pos]
    out[~pos] = 0.5 * np.exp(sigma**2 / (2 * tau**2) - xn / tau) * special.erfc(z[~pos])
    return out


@functools.lru_cache(maxsize=64)
def _emg_peak(tau, sigma):
    res = optimize.minimize_scalar(lambda x: -_emg_unit(np.array([x]), tau, sigma)[0],
                                   bounds=(0.0, 5 * tau + 5 * sigma), method="bounded",
                                   options={"xatol": 1e-6 * sigma})
    return -res.fun


def avalanche_current(t, spec: AvalanchePulseSpec):
    """Discharge current I_D(t) in amperes, scalar or array ``t`` in seconds."""
    scalar = np.ndim(t) == 0
    x = np.atleast_1d(np.asarray(t, dtype=float)) - spec.onset
    if spec.shape == "rectangular":
        out = np.where((x >= 0) & (x < spec.decay_tau), spec.peak_current, 0.0)
    elif spec.shape == "exponential":
        out = np.where(x >= 0, spec.peak_current * np.exp(-np.maximum(x, 0) / spec.decay_tau), 0.0)
    else:
        peak = _emg_peak(spec.decay_tau, spec.gauss_sigma)
        out = spec.peak_current * _emg_unit(x, spec.decay_tau, spec.gauss_sigma) / peak
    return float(out[0]) if scalar else out


def discharge_charge(spec: AvalanchePulseSpec) -> float:
    """Released charge Q_D: the current integrated from t_rise to t_fall."""
    a, b = spec.t_rise, spec.t_fall
    if not b > a:
        raise ValueError("degenerate integration interval")
    if spec.peak_current == 0:
        return 0.0
    breaks = [p for p in (spec.onset, spec.onset + spec.decay_tau) if a < p < b]
    scale = spec.peak_current * (b - a)
    q, _ = integrate.quad(lambda t: avalanche_current(t, spec), a, b, points=breaks or None,
                          limit=200, epsabs=1e-14 * scale, epsrel=1e-12)
    return max(q, 0.0)


def radiated_power(k: PointChargeKinematics) -> float:
    """Larmor power 2/3 * Q^2 * a^2 / c^3 in Gaussian units.

    Diagnostic only; waveform synthesis uses a configured amplitude.
    """
    if k.speed_ratio >= 0.1:
        raise ValueError(f"speed_ratio {k.speed_ratio} violates the v/c << 1 regime (< 0.1)")
    return 2.0 / 3.0 * k.charge**2 * k.acceleration**2 / k.light_speed**3


# --- channel fingerprints ----------------------------------------------------

def generate_fingerprint(seed: int, length: int = 512, resonance_spec=DEFAULT_RESONANCES,
                         sample_rate: float = 1e9, delay_samples: int = 0,
                         n_echoes: int = 12, resonant_fraction: float = 0.6) -> ChannelFingerprint:
    """Seeded multipath + cavity-resonance FIR fingerprint with unit energy.

    ``resonance_spec`` is a list of ``(frequency_hz, damping_per_s)``; each
    resonance is a damped sinusoid ``exp(-damping*t) * sin(2*pi*f*t + phase)``
    with a seed-dependent phase and amplitude. The multipath part is a direct
    path at tap 0 plus ``n_echoes`` sparse echoes with exponentially decaying
    amplitudes and random signs.
    """
    if length < 16:
        raise ValueError("fingerprint length must be >= 16")
    resonances = tuple((float(f), float(d)) for f, d in resonance_spec)
    if not 2 <= len(resonances) <= 4:
        raise ValueError("resonance_spec must hold 2 to 4 resonances")
    for f, d in resonances:
        if not 0 < f < sample_rate / 2:
            raise ValueError(f"resonance {f} Hz outside (0, {sample_rate / 2}) Hz")
        if d <= 0:
            raise ValueError("resonance damping must be > 0")
    if not 0 <= resonant_fraction <= 1:
        raise ValueError("resonant_fraction must be in [0, 1]")

    rng = np.random.default_rng(seed)
    n = np.arange(length)
    t = n / sample_rate

    multipath = np.zeros(length)
    multipath[0] = 1.0
    decay_len = length / 3
    delays = rng.integers(1, length, size=n_echoes)
    amps = rng.uniform(0.3, 1.0, size=n_echoes) * np.exp(-delays / decay_len)
    signs = rng.choice([-1.0, 1.0], size=n_echoes)
    np.add.at(multipath, delays, amps * signs)

    resonant = np.zeros(length)
    for f, d in resonances:
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.7, 1.3)
        resonant += amp * np.exp(-d * t) * np.sin(2 * np.pi * f * t + phase)

    taps = (math.sqrt(1 - resonant_fraction) * multipath / np.linalg.norm(multipath)
            + math.sqrt(resonant_fraction) * resonant / np.linalg.norm(resonant))
    taps /= np.linalg.norm(taps)
    return ChannelFingerprint(taps, delay_samples, resonances, seed)


def derive_correlated_fingerprint(base: ChannelFingerprint, rho: float, seed: int,
                                  delay_samples: int | None = None,
                                  sample_rate: float = 1e9) -> ChannelFingerprint:
    """Mix ``base`` with a fresh orthogonal fingerprint: rho*h1 + sqrt(1-rho^2)*h_indep.

    rho -> 1 models co-located detectors, rho -> 0 far-apart ones.
    """
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    h1 = base.taps / np.linalg.norm(base.taps)
    fresh = generate_fingerprint(seed, h1.size, base.resonances or DEFAULT_RESONANCES,
                                 sample_rate=sample_rate).taps
    fresh = fresh - np.dot(fresh, h1) * h1
    fresh /= np.linalg.norm(fresh)
    taps = rho * h1 + math.sqrt(max(0.0, 1 - rho**2)) * fresh
    taps /= np.linalg.norm(taps)
    delay = base.delay_samples if delay_samples is None else delay_samples
    return ChannelFingerprint(taps, delay, base.resonances, seed)


# --- waveform synthesis ------------------------------------------------------

def quantize(samples, noise: NoiseSpec):
    """Mid-tread uniform quantizer clamped to +/- full_scale/2."""
    lsb = noise.lsb
    top = 2 ** (noise.digitizer_bits - 1)
    codes = np.clip(np.round(np.asarray(samples, dtype=float) / lsb), -top, top)
    return codes * lsb


def sampled_impulse(pulse: AvalanchePulseSpec, n_samples: int, sample_rate: float = 1e9):
    """Avalanche current sampled on the digitizer grid, normalized to unit peak."""
    if pulse.peak_current == 0:
        return np.zeros(n_samples)
    return avalanche_current(np.arange(n_samples) / sample_rate, pulse) / pulse.peak_current


def reference_amplitude(pulse: AvalanchePulseSpec, noise: NoiseSpec, snr_db: float = 20.0,
                        window: int = 256, sample_rate: float = 1e9) -> float:
    """Impulse amplitude (volts) giving ``snr_db`` over a ``window``-sample record.

    SNR is mean signal power over the window, taken as impulse energy times
    tap energy (unit) divided by ``window``, relative to thermal_sigma**2.
    """
    n = int(math.ceil((pulse.onset + 20 * pulse.decay_tau) * sample_rate)) + 8
    e_imp = float(np.sum(sampled_impulse(pulse, n, sample_rate) ** 2))
    if e_imp == 0:
        raise ValueError("pulse has no energy on the sampling grid")
    p_sig = noise.thermal_sigma**2 * 10 ** (snr_db / 10)
    return math.sqrt(p_sig * window / e_imp)


def received_template(fp: ChannelFingerprint, pulse: AvalanchePulseSpec, n_samples: int,
                      amplitude: float, sample_rate: float = 1e9):
    """Noiseless antenna waveform: amplitude * (impulse conv taps), delayed."""
    if n_samples < fp.taps.size + fp.delay_samples:
        raise ValueError(f"buffer of {n_samples} samples shorter than taps + delay "
                         f"({fp.taps.size + fp.delay_samples})")
    imp = amplitude * sampled_impulse(pulse, n_samples, sample_rate)
    y = np.convolve(imp, fp.taps)[:n_samples]
    out = np.zeros(n_samples)
    d = fp.delay_samples
    out[d:] = y[:n_samples - d]
    return out


def add_noise(x, noise: NoiseSpec, rng: np.random.Generator):
    """Add thermal noise, then digitize."""
    x = np.asarray(x, dtype=float)
    if noise.thermal_sigma > 0:
        x = x + rng.normal(0.0, noise.thermal_sigma, size=x.shape)
    return quantize(x, noise)


def synthesize_waveform(fp: ChannelFingerprint, pulse: AvalanchePulseSpec, noise: NoiseSpec,
                        n_samples: int, seed: int, amplitude: float | None = None,
                        sample_rate: float = 1e9, label: int | None = None) -> WaveformRecord:
    """One triggered antenna capture of a single avalanche.

    ``amplitude`` defaults to the 20 dB reference level of :func:`reference_amplitude`.
    The trigger index marks the impulse onset, as the APD's TTL output would.
    """
    if amplitude is None:
        amplitude = reference_amplitude(pulse, noise, sample_rate=sample_rate)
    clean = received_template(fp, pulse, n_samples, amplitude, sample_rate)
    rng = np.random.default_rng(seed)
    samples = add_noise(clean, noise, rng)
    trig = int(round(pulse.onset * sample_rate))
    return WaveformRecord(samples, sample_rate, trig if trig < n_samples else None, label)
