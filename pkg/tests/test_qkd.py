import itertools

import numpy as np
import pytest
from scipy import stats

from rfqkd import qkd as Q


def test_alice_events_encode_bits():
    evs = Q.alice_generate(1000, 1)
    assert [e.index for e in evs] == list(range(1000))
    for e in evs:
        assert Q.ANGLES[(e.bit, e.basis)] == e.angle
    assert 0.45 < np.mean([e.bit for e in evs]) < 0.55
    with pytest.raises(ValueError):
        Q.PhotonEvent(0, 1, "+", 0)


def test_matching_bases_reproduce_bits():
    evs = Q.alice_generate(500, 2)
    bob = Q.bob_measure(evs, 3, bases=[e.basis for e in evs])
    assert [r.bit for r in bob] == [e.bit for e in evs]


def test_mismatched_bases_are_fair_coins():
    evs = Q.alice_generate(20000, 4)
    flip = {"+": "x", "x": "+"}
    bob = Q.bob_measure(evs, 5, bases=[flip[e.basis] for e in evs])
    agree = np.mean([r.bit == e.bit for r, e in zip(bob, evs)])
    assert abs(agree - 0.5) < 3 * np.sqrt(0.25 / 20000)


def test_sifting_and_zero_qber():
    s = Q.run_session(10000, 7)
    assert abs(s.sifted_fraction - 0.5) < 0.015
    assert s.qber == 0.0 and s.true_qber == 0.0
    assert np.array_equal(s.key_a.indices, s.key_b.indices)


def test_detector_efficiency_drops_clicks():
    s = Q.run_session(10000, 8, detector_efficiency=0.3)
    assert abs(len(s.bob) / 10000 - 0.3) < 4 * np.sqrt(0.21 / 10000)
    with pytest.raises(ValueError):
        Q.bob_measure(Q.alice_generate(5, 0), 0, detector_efficiency=1.5)


def test_intercept_resend_quarter_error():
    s = Q.run_session(10000, 9, intercept_resend_attack=True)
    n = len(s.key_a)
    assert abs(s.true_qber - 0.25) < 3 * np.sqrt(0.25 * 0.75 / n)


def test_passive_receiver_detector_ids():
    s = Q.run_session(2000, 10, receiver="passive")
    ids = {r.detector_id for r in s.bob}
    assert ids == {0, 1, 2, 3}
    for r in s.bob:
        assert r.detector_id // 2 == Q.BASES.index(r.bob_basis)
    assert s.qber == 0.0


def test_estimate_qber_discloses_a_sample():
    a = Q.SiftedKey(np.arange(1000), np.zeros(1000))
    b = Q.SiftedKey(np.arange(1000), np.r_[np.ones(200), np.zeros(800)])
    q, ra, rb = Q.estimate_qber(a, b, 0.1, seed=1)
    assert len(ra) == len(rb) == 900
    # hypergeometric draw of 100 from 200 bad in 1000
    assert stats.hypergeom(1000, 200, 100).cdf(q * 100) > 1e-4
    with pytest.raises(ValueError):
        Q.estimate_qber(a, Q.SiftedKey(np.arange(1, 1001), np.zeros(1000)))


def test_session_determinism_and_seed_independence():
    a, b = Q.run_session(3000, 11), Q.run_session(3000, 11)
    assert Q.transcript_text(a) == Q.transcript_text(b)
    assert Q.transcript_text(a) != Q.transcript_text(Q.run_session(3000, 12))
    seeds = Q.session_seeds(11)
    assert len(set(seeds.values())) == 4


def test_transcript_round_trip():
    s = Q.run_session(500, 13, detector_efficiency=0.8)
    parsed = Q.parse_transcript(Q.transcript_text(s))
    assert len(parsed["rows"]) == 500
    assert parsed["summary"]["sifted_length"] == len(s.key_a)
    assert parsed["summary"]["qber"] == s.qber
    sifted = [r[0] for r in parsed["rows"] if r[5] == 1]
    assert sifted == s.key_a.indices.tolist()
    missing = [r for r in parsed["rows"] if r[4] == -1]
    assert len(missing) == 500 - len(s.bob)


def test_sifted_key_validation():
    with pytest.raises(ValueError):
        Q.SiftedKey([2, 1], [0, 1])
    with pytest.raises(ValueError):
        Q.SiftedKey([1, 2], [0])


@pytest.mark.parametrize("a, b", [(0, 45), (0, 0), (90, -45), (30, 200)])
def test_singlet_sampling_correlator(a, b):
    c = Q.sample_singlet((a, 0, b, 0), 50000, seed=3)
    e = Q.correlator(c, 0, 0)
    assert abs(e - Q.singlet_correlator(a, b)) < 4 * np.sqrt((1 - e * e + 1e-3) / 50000)
    # uniform marginals
    assert abs(c.counts[(0, 0)][0].sum() / 50000 - 0.5) < 0.01


def test_chsh_tsirelson_settings():
    c = Q.sample_singlet((0, 90, 45, -45), 100000, seed=4)
    assert Q.chsh_S(c) == pytest.approx(2 * np.sqrt(2), abs=0.05)
    exact = abs(sum(s * Q.singlet_correlator(a, b) for s, (a, b) in
                    zip((1, 1, 1, -1), ((0, 45), (0, -45), (90, 45), (90, -45)))))
    assert exact == pytest.approx(2 * np.sqrt(2), rel=1e-15)


def test_chsh_classical_settings():
    c = Q.sample_singlet((0, 90, 45, 135), 100000, seed=5)
    assert Q.chsh_S(c) == pytest.approx(0.0, abs=0.05)


def test_local_strategies_never_exceed_two():
    values = [Q.chsh_S(Q.local_deterministic_counts(o))
              for o in itertools.product((Q.UP, Q.DOWN), repeat=4)]
    assert max(values) == 2.0
    assert set(values) == {2.0}


def test_bell_counts_validation():
    with pytest.raises(ValueError):
        Q.BellCounts((0, 0, 0, 0), {(0, 0): np.array([[1, -1], [0, 0]])})
    with pytest.raises(ValueError):
        Q.sample_singlet((0, 90, 45), 10, 0)
