"""Independent reference values frozen into the test suite.

Run with ``python3 tests/oracles/generate.py``; the printed constants are
copied into tests/oracle_values.py. Nothing here imports rfqkd.
"""

import mpmath as mp

mp.mp.dps = 30


def emg_direct(x, tau, sigma):
    """exp(-s/tau) H(s) convolved with a unit-area Gaussian, by quadrature."""
    g = lambda s: mp.exp(-s / tau) * mp.npdf(x - s, 0, sigma)
    return mp.quad(g, [0, max(x, 0) + mp.mpf(0), max(x, 0) + 12 * sigma, mp.inf])


def emg_peak(tau, sigma):
    # stationary point by secant on the numerical derivative
    d = lambda x: mp.diff(lambda u: emg_direct(u, tau, sigma), x)
    x0 = mp.findroot(d, (sigma / 10, 4 * sigma), solver="anderson")
    return x0, emg_direct(x0, tau, sigma)


def default_charge():
    # time in nanoseconds; the charge is rescaled to coulombs at the end
    I0, tau, sigma = mp.mpf("10e-3"), mp.mpf(5), mp.mpf("0.5")
    t_rise, t_fall, onset = mp.mpf(15), mp.mpf(80), mp.mpf(20)
    x0, peak = emg_peak(tau, sigma)
    q = mp.quad(lambda t: emg_direct(t - onset, tau, sigma),
                [t_rise, onset - 5 * sigma, onset, onset + 5 * sigma, onset + 20, t_fall])
    return x0 * mp.mpf("1e-9"), I0 / peak, I0 * q / peak * mp.mpf("1e-9")


if __name__ == "__main__":
    x0, scale, q = default_charge()
    print(f"EMG_PEAK_OFFSET = {mp.nstr(x0, 20)}")
    print(f"EMG_DEFAULT_CHARGE = {mp.nstr(q, 20)}")
    # exp(-x/tau) sampled at one point for a spot check of the current shape
    tau, sigma = mp.mpf(5), mp.mpf("0.5")
    for x in ("-1", "0", "2", "10"):
        v = emg_direct(mp.mpf(x), tau, sigma) * scale
        print(f"EMG_CURRENT[{x} ns] = {mp.nstr(v, 20)}")
