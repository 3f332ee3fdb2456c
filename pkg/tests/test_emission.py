import math

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from oracle_values import EMG_CURRENT_NS, EMG_DEFAULT_CHARGE, EMG_PEAK_OFFSET
from rfqkd import emission as E


def test_current_peak_equals_peak_current():
    spec = E.AvalanchePulseSpec()
    t = spec.onset + np.linspace(0, 3e-9, 30001)
    i = E.avalanche_current(t, spec)
    assert i.max() == pytest.approx(spec.peak_current, rel=1e-9)
    assert t[np.argmax(i)] - spec.onset == pytest.approx(EMG_PEAK_OFFSET, abs=2e-13)


@pytest.mark.parametrize("x_ns, ref", sorted(EMG_CURRENT_NS.items()))
def test_current_matches_direct_convolution(x_ns, ref):
    spec = E.AvalanchePulseSpec()
    assert E.avalanche_current(spec.onset + x_ns * 1e-9, spec) == pytest.approx(ref, rel=1e-10)


def test_default_charge_matches_quadrature_oracle():
    assert E.discharge_charge(E.AvalanchePulseSpec()) == pytest.approx(EMG_DEFAULT_CHARGE, rel=1e-9)


def test_current_is_zero_well_before_onset():
    spec = E.AvalanchePulseSpec()
    assert E.avalanche_current(spec.onset - 10e-9, spec) < 1e-30


def test_zero_peak_gives_zero_charge():
    spec = E.AvalanchePulseSpec(peak_current=0.0)
    assert E.discharge_charge(spec) == 0.0
    assert np.all(E.avalanche_current(np.linspace(0, 1e-7, 50), spec) == 0)


@pytest.mark.parametrize("kw", [
    dict(peak_current=-1e-3), dict(t_rise=90e-9), dict(t_rise=-1e-9),
    dict(gauss_sigma=6e-9), dict(shape="triangle"), dict(decay_tau=0.0),
])
def test_pulse_spec_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        E.AvalanchePulseSpec(**kw)


@settings(max_examples=40, deadline=None)
@given(tau=st.floats(0.5e-9, 20e-9), i0=st.floats(1e-4, 0.1),
       start=st.floats(0, 30e-9), length=st.floats(1e-9, 80e-9))
def test_exponential_charge_closed_form(tau, i0, start, length):
    spec = E.AvalanchePulseSpec(peak_current=i0, decay_tau=tau, onset=10e-9, t_rise=start,
                                t_fall=start + length, shape="exponential")
    a, b = max(start, 10e-9), start + length
    expected = i0 * tau * (math.exp(-(a - 10e-9) / tau) - math.exp(-(b - 10e-9) / tau)) if b > a else 0.0
    assert E.discharge_charge(spec) == pytest.approx(expected, rel=1e-9, abs=1e-25)


def test_larmor_power():
    k = E.PointChargeKinematics(charge=4.8e-10, acceleration=1e18, speed_ratio=0.01)
    assert E.radiated_power(k) == pytest.approx(2 / 3 * 4.8e-10**2 * 1e36 / E.SPEED_OF_LIGHT_CGS**3, rel=1e-15)
    with pytest.raises(ValueError):
        E.radiated_power(replace(k, speed_ratio=0.1))


@pytest.mark.parametrize("seed", range(5))
def test_fingerprint_unit_energy_and_determinism(seed):
    a = E.generate_fingerprint(seed)
    b = E.generate_fingerprint(seed)
    assert a.energy == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(a.taps, b.taps)
    assert not np.array_equal(a.taps, E.generate_fingerprint(seed + 1).taps)


def test_fingerprint_has_resonance_peaks():
    fp = E.generate_fingerprint(3)
    spec = np.abs(np.fft.rfft(fp.taps, 8192))
    f = np.fft.rfftfreq(8192, 1e-9)
    band = (f > 20e6) & (f < 400e6)
    median = np.median(spec[band])
    for fr, _ in E.DEFAULT_RESONANCES:
        near = np.abs(f - fr) < 3e6
        assert spec[near].max() > 4 * median


@pytest.mark.parametrize("bad", [dict(length=8), dict(resonance_spec=((65e6, 4e6),)),
                                 dict(resonance_spec=((65e6, 4e6), (6e8, 4e6)))])
def test_fingerprint_rejects_bad_specs(bad):
    with pytest.raises(ValueError):
        E.generate_fingerprint(0, **bad)


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.9, 1.0])
def test_correlated_fingerprint_inner_product(rho):
    base = E.generate_fingerprint(11)
    fp = E.derive_correlated_fingerprint(base, rho, 12, delay_samples=1)
    assert fp.energy == pytest.approx(1.0, abs=1e-12)
    assert np.dot(base.taps, fp.taps) == pytest.approx(rho, abs=1e-12)
    assert fp.delay_samples == 1


def test_correlated_fingerprint_rejects_rho():
    with pytest.raises(ValueError):
        E.derive_correlated_fingerprint(E.generate_fingerprint(0), 1.5, 1)


def test_quantizer_matches_nearest_level_search():
    noise = E.NoiseSpec(digitizer_bits=6, full_scale=1.0)
    levels = np.arange(-32, 33) * noise.lsb
    x = np.random.default_rng(0).uniform(-0.7, 0.7, 2000)
    brute = levels[np.argmin(np.abs(x[:, None] - levels[None, :]), axis=1)]
    assert np.array_equal(E.quantize(x, noise), brute)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=50), st.integers(4, 16))
def test_quantizer_error_bound(xs, bits):
    noise = E.NoiseSpec(digitizer_bits=bits, full_scale=1.0)
    x = np.array(xs)
    q = E.quantize(x, noise)
    inside = np.abs(x) <= 0.5
    assert np.all(np.abs(q[inside] - x[inside]) <= noise.lsb / 2 + 1e-15)
    assert np.all(np.abs(q) <= 0.5 + 1e-15)


def test_reference_amplitude_sets_window_snr():
    pulse = E.AvalanchePulseSpec()
    noise = E.NoiseSpec()
    amp = E.reference_amplitude(pulse, noise, snr_db=20.0)
    y_imp = amp * E.sampled_impulse(pulse, 400)
    assert np.sum(y_imp**2) / 256 / noise.thermal_sigma**2 == pytest.approx(100.0, rel=1e-6)


def test_template_delay_and_length_check():
    pulse = E.AvalanchePulseSpec()
    fp = E.generate_fingerprint(2, length=64)
    t0 = E.received_template(fp, pulse, 200, 1.0)
    t3 = E.received_template(replace(fp, delay_samples=3), pulse, 200, 1.0)
    assert np.array_equal(t3[3:], t0[:-3])
    assert np.all(t3[:3] == 0)
    with pytest.raises(ValueError):
        E.received_template(fp, pulse, 60, 1.0)


def test_synthesize_waveform_is_seeded():
    fp = E.generate_fingerprint(0)
    pulse, noise = E.AvalanchePulseSpec(), E.NoiseSpec()
    a = E.synthesize_waveform(fp, pulse, noise, 800, seed=5, label=1)
    b = E.synthesize_waveform(fp, pulse, noise, 800, seed=5, label=1)
    c = E.synthesize_waveform(fp, pulse, noise, 800, seed=6, label=1)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.trigger_index == 20 and a.label == 1
    # samples sit on the digitizer grid
    assert np.allclose(a.samples / noise.lsb, np.round(a.samples / noise.lsb))


def test_noise_statistics():
    noise = E.NoiseSpec(thermal_sigma=5e-3, digitizer_bits=12, full_scale=1.0)
    x = E.add_noise(np.zeros(200000), noise, np.random.default_rng(1))
    # quantization adds lsb^2/12 to the variance
    assert np.var(x) == pytest.approx(noise.thermal_sigma**2 + noise.lsb**2 / 12, rel=0.02)


def test_identity_channel_returns_the_pulse():
    pulse = E.AvalanchePulseSpec()
    out = E.received_template(E.ChannelFingerprint([1.0]), pulse, 300, 0.3)
    assert np.array_equal(out, 0.3 * E.sampled_impulse(pulse, 300))
    fine = E.NoiseSpec(thermal_sigma=0.0, digitizer_bits=24, full_scale=1.0)
    w = E.synthesize_waveform(E.ChannelFingerprint([1.0]), pulse, fine, 300, seed=0, amplitude=0.3)
    assert np.max(np.abs(w.samples - out)) <= fine.lsb / 2


@pytest.mark.parametrize("seed", range(3))
def test_unit_energy_taps_preserve_impulse_energy(seed):
    # a pulse much shorter than one sample is a single-sample impulse on the grid
    pulse = E.AvalanchePulseSpec(decay_tau=0.02e-9, gauss_sigma=0.004e-9, onset=20e-9,
                                 t_rise=15e-9, t_fall=30e-9)
    imp = E.sampled_impulse(pulse, 600)
    assert np.count_nonzero(imp > 1e-12) == 1
    fp = E.generate_fingerprint(seed)
    y = E.received_template(fp, pulse, 600, 0.2)
    assert np.sum(y**2) == pytest.approx(0.2**2 * np.sum(imp**2) * fp.energy, rel=1e-12)
