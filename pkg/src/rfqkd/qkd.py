"""BB84 prepare-and-measure engine and CHSH Bell-test statistics."""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field

import numpy as np

RECT, DIAG = "+", "x"
BASES = (RECT, DIAG)
ANGLES = {(0, RECT): 0, (1, RECT): 90, (0, DIAG): 45, (1, DIAG): 135}
UP, DOWN = 1, -1


@dataclass(frozen=True)
class PhotonEvent:
    index: int
    bit: int
    basis: str
    angle: int

    def __post_init__(self):
        if ANGLES.get((self.bit, self.basis)) != self.angle:
            raise ValueError(f"angle {self.angle} does not encode bit {self.bit} in basis {self.basis!r}")


@dataclass(frozen=True)
class DetectionRecord:
    """One click at Bob. ``detector_id`` is 0/1 (SPD1/SPD2) for the active
    receiver, 0..3 for the passive four-detector variant."""

    index: int
    bob_basis: str
    detector_id: int

    @property
    def bit(self) -> int:
        return self.detector_id % 2


@dataclass
class SiftedKey:
    indices: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.bits = np.asarray(self.bits, dtype=np.int8)
        if self.indices.shape != self.bits.shape:
            raise ValueError("indices and bits must have equal length")
        if self.indices.size > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")

    def __len__(self):
        return int(self.indices.size)

    def subset(self, keep: np.ndarray) -> "SiftedKey":
        return SiftedKey(self.indices[keep], self.bits[keep])


def _check_basis(b):
    if b not in BASES:
        raise ValueError(f"basis must be '+' or 'x', got {b!r}")


def alice_generate(n: int, seed: int) -> list[PhotonEvent]:
    """n photons with independent fair bits and bases."""
    if n <= 0:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, n)
    bases = rng.integers(0, 2, n)
    return [PhotonEvent(i, int(b), BASES[k], ANGLES[(int(b), BASES[k])])
            for i, (b, k) in enumerate(zip(bits, bases))]


def intercept_resend(events: list[PhotonEvent], seed: int) -> list[PhotonEvent]:
    """Measure each photon in a random basis and resend the result (test adversary)."""
    rng = np.random.default_rng(seed)
    eve_bases = rng.integers(0, 2, len(events))
    coins = rng.integers(0, 2, len(events))
    out = []
    for ev, kb, c in zip(events, eve_bases, coins):
        basis = BASES[kb]
        bit = ev.bit if basis == ev.basis else int(c)
        out.append(PhotonEvent(ev.index, bit, basis, ANGLES[(bit, basis)]))
    return out


def bob_measure(events: list[PhotonEvent], seed: int, detector_efficiency: float = 1.0,
                bases=None, receiver: str = "active") -> list[DetectionRecord]:
    """Ideal polarization analysis with random basis choice and lossy detection.

    ``bases`` forces Bob's basis sequence (test hook). ``receiver="passive"``
    routes each basis to its own detector pair (ids 2*basis + bit).
    """
    if not 0 <= detector_efficiency <= 1:
        raise ValueError("detector_efficiency must be in [0, 1]")
    if receiver not in ("active", "passive"):
        raise ValueError(f"unknown receiver {receiver!r}")
    n = len(events)
    rng = np.random.default_rng(seed)
    basis_idx = rng.integers(0, 2, n)
    coins = rng.integers(0, 2, n)
    survive = rng.random(n) < detector_efficiency
    if bases is not None:
        if len(bases) != n:
            raise ValueError("one forced basis per event")
        for b in bases:
            _check_basis(b)
        basis_idx = np.array([BASES.index(b) for b in bases])
    out = []
    for ev, k, c, ok in zip(events, basis_idx, coins, survive):
        if not ok:
            continue
        basis = BASES[k]
        bit = ev.bit if basis == ev.basis else int(c)
        det = 2 * int(k) + bit if receiver == "passive" else bit
        out.append(DetectionRecord(ev.index, basis, det))
    return out


def sift(alice_events: list[PhotonEvent], bob_records: list[DetectionRecord]):
    """Keep detected indices where Alice's and Bob's bases agree."""
    by_index = {ev.index: ev for ev in alice_events}
    idx, a_bits, b_bits = [], [], []
    for rec in sorted(bob_records, key=lambda r: r.index):
        ev = by_index.get(rec.index)
        if ev is None:
            raise ValueError(f"record references unknown index {rec.index}")
        if ev.basis == rec.bob_basis:
            idx.append(rec.index)
            a_bits.append(ev.bit)
            b_bits.append(rec.bit)
    return SiftedKey(idx, a_bits), SiftedKey(idx, b_bits)


def estimate_qber(key_a: SiftedKey, key_b: SiftedKey, disclose_fraction: float = 0.10,
                  seed: int = 0):
    """Publicly compare a random sample of the key, then discard it.

    Returns ``(qber, remaining_a, remaining_b)``.
    """
    if len(key_a) == 0 or len(key_b) == 0:
        raise ValueError("cannot estimate QBER of an empty key")
    if not np.array_equal(key_a.indices, key_b.indices):
        raise ValueError("keys are not aligned")
    if not 0 < disclose_fraction < 1:
        raise ValueError("disclose_fraction must be in (0, 1)")
    n = len(key_a)
    m = max(1, int(round(disclose_fraction * n)))
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.choice(n, size=m, replace=False))
    qber = float(np.mean(key_a.bits[sample] != key_b.bits[sample]))
    keep = np.ones(n, dtype=bool)
    keep[sample] = False
    return qber, key_a.subset(keep), key_b.subset(keep)


def error_rate(key_a: SiftedKey, key_b: SiftedKey) -> float:
    """Exact mismatch fraction over the whole aligned key (simulation ground truth)."""
    if len(key_a) == 0:
        raise ValueError("empty key")
    return float(np.mean(key_a.bits != key_b.bits))


# --- sessions and transcripts ------------------------------------------------

@dataclass
class QkdSession:
    n_photons: int
    seed: int
    alice: list
    bob: list
    key_a: SiftedKey
    key_b: SiftedKey
    qber: float
    true_qber: float
    final_a: SiftedKey = field(repr=False, default=None)
    final_b: SiftedKey = field(repr=False, default=None)
    chsh: float | None = None

    @property
    def sifted_fraction(self) -> float:
        return len(self.key_a) / max(1, len(self.bob))


def session_seeds(seed: int) -> dict:
    """Independent child seeds for every random stage of a session."""
    kids = np.random.SeedSequence(seed).spawn(4)
    names = ("alice", "bob", "qber", "adversary")
    return {k: int(s.generate_state(1)[0]) for k, s in zip(names, kids)}


def run_session(n_photons: int, seed: int, detector_efficiency: float = 1.0,
                intercept_resend_attack: bool = False, disclose_fraction: float = 0.10,
                receiver: str = "active") -> QkdSession:
    """Alice -> (optional intercept-resend) -> Bob -> sifting -> QBER check."""
    s = session_seeds(seed)
    alice = alice_generate(n_photons, s["alice"])
    channel = intercept_resend(alice, s["adversary"]) if intercept_resend_attack else alice
    bob = bob_measure(channel, s["bob"], detector_efficiency, receiver=receiver)
    ka, kb = sift(alice, bob)
    if len(ka) == 0:
        return QkdSession(n_photons, seed, alice, bob, ka, kb, float("nan"), float("nan"), ka, kb)
    qber, fa, fb = estimate_qber(ka, kb, disclose_fraction, s["qber"])
    return QkdSession(n_photons, seed, alice, bob, ka, kb, qber, error_rate(ka, kb), fa, fb)


def transcript_text(session: QkdSession) -> str:
    """Per-index table plus summary lines; byte-stable for equal sessions."""
    det = {r.index: r for r in session.bob}
    sifted = set(session.key_a.indices.tolist())
    buf = io.StringIO()
    buf.write(f"# qkd_transcript v1 n_photons={session.n_photons} seed={session.seed}\n")
    buf.write("index,alice_bit,alice_basis,bob_basis,detector_id,sifted\n")
    for ev in session.alice:
        r = det.get(ev.index)
        bb, d = (r.bob_basis, r.detector_id) if r else ("-", -1)
        buf.write(f"{ev.index},{ev.bit},{ev.basis},{bb},{d},{int(ev.index in sifted)}\n")
    buf.write(f"# sifted_length={len(session.key_a)}\n")
    buf.write(f"# qber={session.qber!r}\n")
    buf.write(f"# true_qber={session.true_qber!r}\n")
    if session.chsh is not None:
        buf.write(f"# chsh_S={session.chsh!r}\n")
    return buf.getvalue()


def parse_transcript(text: str) -> dict:
    """Inverse of :func:`transcript_text` (rows as int/str columns, summary as floats)."""
    rows, summary = [], {}
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# qkd_transcript"):
        raise ValueError("not a qkd transcript")
    for tok in lines[0].split()[3:]:
        k, v = tok.split("=")
        summary[k] = int(v)
    for line in lines[2:]:
        if line.startswith("#"):
            k, v = line[1:].strip().split("=")
            summary[k] = float(v)
            continue
        i, ab, abas, bbas, d, s = line.split(",")
        rows.append((int(i), int(ab), abas, bbas, int(d), int(s)))
    return {"rows": rows, "summary": summary}


# --- CHSH --------------------------------------------------------------------

@dataclass
class BellCounts:
    """Coincidence counts per setting pair.

    ``counts[(a, b)]`` is a 2x2 array indexed [A outcome, B outcome] with
    row/column 0 = up (+1) and 1 = down (-1); a in {0: alpha, 1: alpha'},
    b in {0: beta, 1: beta'}.
    """

    settings: tuple  # (alpha, alpha', beta, beta') in degrees
    counts: dict

    def __post_init__(self):
        for key, c in self.counts.items():
            c = np.asarray(c, dtype=np.int64)
            if c.shape != (2, 2) or np.any(c < 0):
                raise ValueError(f"counts for {key} must be a non-negative 2x2 array")
            self.counts[key] = c

    def total(self, a: int, b: int) -> int:
        return int(self.counts[(a, b)].sum())


def singlet_correlator(a_deg: float, b_deg: float) -> float:
    return -float(np.cos(np.radians(a_deg - b_deg)))


def sample_singlet(settings, n: int, seed: int) -> BellCounts:
    """Sample n singlet pairs per setting pair: uniform marginals, E = -cos(a - b)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    settings = tuple(float(s) for s in settings)
    if len(settings) != 4:
        raise ValueError("settings are (alpha, alpha', beta, beta')")
    rng = np.random.default_rng(seed)
    counts = {}
    for ia, ib in itertools.product((0, 1), (0, 1)):
        e = singlet_correlator(settings[ia], settings[2 + ib])
        a_up = rng.random(n) < 0.5
        same = rng.random(n) < (1 + e) / 2
        b_up = np.where(same, a_up, ~a_up)
        c = np.zeros((2, 2), dtype=np.int64)
        np.add.at(c, ((~a_up).astype(int), (~b_up).astype(int)), 1)
        counts[(ia, ib)] = c
    return BellCounts(settings, counts)


def correlator(counts: BellCounts, a: int, b: int) -> float:
    """(N_uu + N_dd - N_ud - N_du) / N for one setting pair."""
    c = counts.counts[(a, b)]
    total = c.sum()
    if total == 0:
        raise ValueError(f"no events for setting pair {(a, b)}")
    return float(c[0, 0] + c[1, 1] - c[0, 1] - c[1, 0]) / float(total)


def chsh_S(counts: BellCounts) -> float:
    """S = |E(a,b) + E(a,b') + E(a',b) - E(a',b')|."""
    return abs(correlator(counts, 0, 0) + correlator(counts, 0, 1)
               + correlator(counts, 1, 0) - correlator(counts, 1, 1))


def local_deterministic_counts(outcomes, n: int = 1, settings=(0.0, 90.0, 45.0, -45.0)) -> BellCounts:
    """Counts produced by a fixed local assignment (A_alpha, A_alpha', B_beta, B_beta') of +-1."""
    a0, a1, b0, b1 = outcomes
    counts = {}
    for ia, A in ((0, a0), (1, a1)):
        for ib, B in ((0, b0), (1, b1)):
            c = np.zeros((2, 2), dtype=np.int64)
            c[0 if A == UP else 1, 0 if B == UP else 1] = n
            counts[(ia, ib)] = c
    return BellCounts(tuple(settings), counts)
