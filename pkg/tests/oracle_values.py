"""Reference values from tests/oracles/generate.py (mpmath, 30 digits).

The generator integrates the exponential * Gaussian convolution directly,
without the erfc closed form the package uses.
"""

# default pulse: peak 10 mA, tau 5 ns, sigma 0.5 ns, onset 20 ns, window [15, 80] ns
EMG_PEAK_OFFSET = 8.9560837051015633889e-10
EMG_DEFAULT_CHARGE = 6.2339732120975261159e-11
EMG_CURRENT_NS = {
    -1.0: 0.00027341158483463257301,
    0.0: 0.0057661963236137558402,
    2.0: 0.0083990545199019295745,
    10.0: 0.001695821424826112625,
}
