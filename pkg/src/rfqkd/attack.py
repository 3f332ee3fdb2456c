"""Two-phase RF side-channel eavesdropper and countermeasure sweeps.

Learning phase: Eve injects test photons, captures triggered waveforms from
each detector, and trains the classifier. Intercept phase: Eve listens to a
free-running stream during a normal session, detects avalanche pulses,
classifies them, and keeps the bits Bob and Alice announce as sifted.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import classifier as clf
from . import qkd
from .dsp import (BandSpec, CorrelationMatrix, DetectionConfig, band_mask, best_window_start,
                  correlation_matrix, estimate_noise_floor, excise_frequency_array, detect_pulses,
                  separability_margin)
from .emission import (DEFAULT_RESONANCES, AvalanchePulseSpec, ChannelFingerprint, NoiseSpec,
                       WaveformRecord, derive_correlated_fingerprint, generate_fingerprint,
                       quantize, received_template, reference_amplitude)

# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class FingerprintConfig:
    rho: float = 0.3
    seed_a: int | None = None  # None: derived from the master seed
    seed_b: int | None = None
    length: int = 512
    resonances: tuple = DEFAULT_RESONANCES
    delay_a: int = 0
    delay_b: int = 1

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ValueError("fingerprint.rho must be in [0, 1]")
        if self.length < 16:
            raise ValueError("fingerprint.length must be >= 16")
        if min(self.delay_a, self.delay_b) < 0:
            raise ValueError("fingerprint delays must be >= 0")


@dataclass(frozen=True)
class AcquisitionConfig:
    sample_rate: float = 1e9
    record_len: int = 1200
    pre_trigger: int = 300  # samples ahead of the avalanche onset in every record
    excision_len: int = 256
    snr_db: float = 20.0
    coherent_k: int = 1
    waveforms_per_detector: int = 64
    train_fraction: float = 0.5

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("acquisition.sample_rate must be > 0")
        if not 0 < self.train_fraction < 1:
            raise ValueError("acquisition.train_fraction must be in (0, 1)")
        if self.waveforms_per_detector < 2:
            raise ValueError("acquisition.waveforms_per_detector must be >= 2")
        if self.coherent_k < 1:
            raise ValueError("acquisition.coherent_k must be >= 1")
        if not 0 < self.excision_len <= self.record_len:
            raise ValueError("acquisition.excision_len must be in (0, record_len]")
        if not 0 <= self.pre_trigger < self.record_len:
            raise ValueError("acquisition.pre_trigger must be in [0, record_len)")


@dataclass(frozen=True)
class CountermeasureConfig:
    shielding_db: float = 0.0
    jammer_sigma: float = 0.0  # RMS volts of in-band Gaussian jamming

    def __post_init__(self):
        if self.shielding_db < 0:
            raise ValueError("countermeasures.shielding_db must be >= 0")
        if self.jammer_sigma < 0:
            raise ValueError("countermeasures.jammer_sigma must be >= 0")


@dataclass(frozen=True)
class AntennaConfig:
    positions: tuple = (2.0,)  # candidate distances, metres
    reference_distance: float = 2.0  # distance at which snr_db holds

    def __post_init__(self):
        if not self.positions or min(self.positions) <= 0:
            raise ValueError("antenna.positions must be a nonempty list of distances > 0")
        if not self.reference_distance > 0:
            raise ValueError("antenna.reference_distance must be > 0")


@dataclass(frozen=True)
class ClassifierSettings:
    hidden: tuple = (128, 64, 32, 16, 8)
    activation: str = "relu"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 128
    target_loss: float = 1e-3
    shift_augment: int = 12  # training windows at best start +/- this many samples

    def __post_init__(self):
        if self.shift_augment < 0:
            raise ValueError("classifier.shift_augment must be >= 0")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("classifier.hidden must list positive layer widths")


@dataclass(frozen=True)
class SessionConfig:
    length: int = 10000
    efficiency: float = 1.0
    disclose_fraction: float = 0.10
    slot_len: int = 1500  # samples between scheduled photon emissions
    chunk_slots: int = 1000

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("session.length must be >= 1")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("session.efficiency must be in [0, 1]")
        if self.chunk_slots < 1:
            raise ValueError("session.chunk_slots must be >= 1")


@dataclass(frozen=True)
class DetectionSettings:
    window: int = 64
    k: float = 5.0
    edge_k: float = 6.0
    refractory: int = 640
    alignment_tolerance: int = 2


@dataclass(frozen=True)
class ScenarioConfig:
    master_seed: int = 0
    pulse: AvalanchePulseSpec = AvalanchePulseSpec()
    noise: NoiseSpec = NoiseSpec()
    band: BandSpec = BandSpec()
    fingerprint: FingerprintConfig = FingerprintConfig()
    acquisition: AcquisitionConfig = AcquisitionConfig()
    countermeasures: CountermeasureConfig = CountermeasureConfig()
    antenna: AntennaConfig = AntennaConfig()
    classifier: ClassifierSettings = ClassifierSettings()
    session: SessionConfig = SessionConfig()
    detection: DetectionSettings = DetectionSettings()

    def __post_init__(self):
        acq = self.acquisition
        self.band.validate(acq.sample_rate)
        need = acq.pre_trigger + self.fingerprint.length + max(self.fingerprint.delay_a,
                                                               self.fingerprint.delay_b)
        if acq.record_len < need:
            raise ValueError(f"acquisition.record_len must be >= pre_trigger + fingerprint.length "
                             f"+ delay ({need})")
        if self.session.slot_len < acq.record_len:
            raise ValueError("session.slot_len must be >= acquisition.record_len")
        if self.detection.refractory >= self.session.slot_len:
            raise ValueError("detection.refractory must be shorter than session.slot_len")


def derive_seed(master: int, *tags) -> int:
    """Child seed for a named stage, stable across runs and platforms."""
    words = [int(master) & 0xFFFFFFFF] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def scenario_pulse(cfg: ScenarioConfig) -> AvalanchePulseSpec:
    """Pulse spec shifted so the onset sits ``pre_trigger`` samples into each record."""
    p = cfg.pulse
    shift = cfg.acquisition.pre_trigger / cfg.acquisition.sample_rate - p.onset
    return replace(p, onset=p.onset + shift, t_rise=p.t_rise + shift, t_fall=p.t_fall + shift)


def scenario_fingerprints(cfg: ScenarioConfig) -> tuple[ChannelFingerprint, ChannelFingerprint]:
    f = cfg.fingerprint
    fs = cfg.acquisition.sample_rate
    sa = f.seed_a if f.seed_a is not None else derive_seed(cfg.master_seed, "fingerprint_a")
    sb = f.seed_b if f.seed_b is not None else derive_seed(cfg.master_seed, "fingerprint_b")
    fa = generate_fingerprint(sa, f.length, f.resonances, fs, f.delay_a)
    fb = derive_correlated_fingerprint(fa, f.rho, sb, delay_samples=f.delay_b, sample_rate=fs)
    return fa, fb


def snr_scale(cfg: ScenarioConfig, distance: float) -> float:
    """Linear SNR relative to the reference placement: (d_ref/d)^2 times shielding loss."""
    return (cfg.antenna.reference_distance / distance) ** 2 * 10 ** (-cfg.countermeasures.shielding_db / 10)


def scenario_amplitude(cfg: ScenarioConfig, distance: float | None = None) -> float:
    acq = cfg.acquisition
    d = cfg.antenna.reference_distance if distance is None else distance
    base = reference_amplitude(scenario_pulse(cfg), cfg.noise, acq.snr_db, acq.excision_len,
                               acq.sample_rate)
    return base * math.sqrt(snr_scale(cfg, d))


def signal_rms(cfg: ScenarioConfig) -> float:
    """RMS of the noiseless received signal over an excision window at the reference placement."""
    return cfg.noise.thermal_sigma * 10 ** (cfg.acquisition.snr_db / 20)


def jammer_noise(shape, sigma: float, sample_rate: float, band: BandSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise confined to ``band`` with per-sample RMS ``sigma`` (last axis is time)."""
    shape = tuple(np.atleast_1d(shape))
    if sigma == 0:
        return np.zeros(shape)
    n = shape[-1]
    mask = band_mask(n, sample_rate, band)
    weight = np.full(mask.size, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    kept = float(np.sum(weight[mask])) / n  # variance ratio of the brickwall filter on white noise
    if kept == 0:
        raise ValueError("jammer band holds no frequency bins")
    white = rng.normal(0.0, sigma / math.sqrt(kept), size=shape)
    return excise_frequency_array(white, sample_rate, band)


def _capture(clean, cfg: ScenarioConfig, rng, shape):
    """Digitized antenna samples: clean + thermal + jammer, broadcast to ``shape``."""
    x = np.broadcast_to(clean, shape) + rng.normal(0.0, cfg.noise.thermal_sigma, size=shape)
    if cfg.countermeasures.jammer_sigma > 0:
        x = x + jammer_noise(shape, cfg.countermeasures.jammer_sigma, cfg.acquisition.sample_rate,
                             cfg.band, rng)
    return quantize(x, cfg.noise)


# --- learning sub-steps --------------------------------------------------------


@dataclass(frozen=True)
class ReceiverSim:
    """Bob's polarization analyzer as seen through the RF side channel.

    A photon at angle theta clicks detector 0 with probability
    cos^2(theta - axis). ``misread`` is the chance Eve attributes a click to
    the wrong detector; 0.5 models a jammer that saturates her receiver.
    """

    axis_deg: float = 0.0
    misread: float = 0.0

    def clicks(self, angle_deg: float, shots: int, rng: np.random.Generator) -> np.ndarray:
        p0 = math.cos(math.radians(angle_deg - self.axis_deg)) ** 2
        det = (rng.random(shots) >= p0).astype(int)
        flip = rng.random(shots) < self.misread
        return np.where(flip, 1 - det, det)


@dataclass(frozen=True)
class PolarizationResult:
    angle: float
    consistency: dict  # angle -> fraction of shots on the majority detector
    histogram: dict  # angle -> (clicks on detector 0, clicks on detector 1)
    p_value: float
    conclusive: bool


def learn_polarization(target_sim: ReceiverSim, candidate_angles, shots_per_angle: int,
                       seed: int, alpha: float = 0.01) -> PolarizationResult:
    """Scan test-laser polarizations and keep the one whose clicks are most consistent.

    Consistency is the majority-detector fraction. A chi-square test of the
    click histogram against fair 50/50 clicks flags the scan inconclusive
    when p > ``alpha``.
    """
    angles = sorted(float(a) for a in candidate_angles)
    if not angles:
        raise ValueError("candidate_angles is empty")
    if shots_per_angle < 1:
        raise ValueError("shots_per_angle must be >= 1")
    rng = np.random.default_rng(seed)
    hist, cons = {}, {}
    chi2 = 0.0
    for a in angles:
        c = target_sim.clicks(a, shots_per_angle, rng)
        n1 = int(c.sum())
        n0 = shots_per_angle - n1
        hist[a] = (n0, n1)
        cons[a] = max(n0, n1) / shots_per_angle
        chi2 += (n0 - n1) ** 2 / shots_per_angle
    best = max(angles, key=lambda a: (cons[a], -a))
    p = float(stats.chi2.sf(chi2, df=len(angles)))
    return PolarizationResult(best, cons, hist, p, p <= alpha)


@dataclass(frozen=True)
class AntennaSearch:
    position: float
    snr: float
    trajectory: tuple  # ((position, snr), ...) visited in order


def optimize_antenna_position(snr_field, candidates, seed: int) -> AntennaSearch:
    """Hill-climb over sorted candidate positions from a random start.

    Moves to the better neighbour only on a strict SNR improvement.
    """
    pos = sorted(float(c) for c in candidates)
    if not pos:
        raise ValueError("no antenna candidates")
    rng = np.random.default_rng(seed)
    i = int(rng.integers(len(pos)))
    snr = [float(snr_field(p)) for p in pos]
    path = [(pos[i], snr[i])]
    while True:
        nbrs = [j for j in (i - 1, i + 1) if 0 <= j < len(pos)]
        j = max(nbrs, key=lambda j: snr[j]) if nbrs else i
        if snr[j] <= snr[i]:
            break
        i = j
        path.append((pos[i], snr[i]))
    return AntennaSearch(pos[i], snr[i], tuple(path))


def window_batch(F: np.ndarray, out_len: int, shifts=(0,)) -> np.ndarray:
    """Unit-energy ``out_len`` windows at each row's energy-maximal start plus ``shifts``."""
    out = []
    for i, row in enumerate(F):
        s0 = best_window_start(row, out_len)
        for d in shifts:
            s = min(max(s0 + d, 0), row.size - out_len)
            seg = row[s:s + out_len]
            e = float(np.dot(seg, seg))
            if not e > 0:
                raise ValueError(f"record {i} has zero energy after excision")
            out.append(seg / math.sqrt(e))
    return np.array(out)


# --- learning phase ------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """What the intercept phase needs from learning besides the model."""

    noise_floor: tuple  # (mean, std) of the windowed energy on noise alone
    edge_window: tuple  # accepted (min, max) detection-edge offset from the scheduled onset
    amplitude: float


def default_calibration(cfg: ScenarioConfig) -> Calibration:
    """Calibration predicted from the configured noise, without a learning run."""
    W = cfg.detection.window
    var = cfg.noise.thermal_sigma**2 + cfg.countermeasures.jammer_sigma**2 + cfg.noise.lsb**2 / 12
    tol = cfg.detection.alignment_tolerance
    edge = (-tol, max(cfg.fingerprint.delay_a, cfg.fingerprint.delay_b) + tol + 8)
    return Calibration((W * var, var * math.sqrt(2 * W)), edge, scenario_amplitude(cfg))


@dataclass
class LearningReport:
    accuracy: float
    confusion: np.ndarray
    separability: object  # SeparabilityReport
    m_co: CorrelationMatrix
    m_co_b: CorrelationMatrix
    m_cross: CorrelationMatrix
    polarization: PolarizationResult
    antenna: AntennaSearch
    amplitude: float
    noise_floor: tuple
    edge_window: tuple  # accepted (min, max) detection-edge offset from the scheduled onset
    loss_history: list
    session_aborted: bool = True  # Eve's laser displaces Alice: Alice and Bob see it and discard
    inseparable: bool = False
    master_seed: int = 0

    @property
    def calibration(self) -> Calibration:
        return Calibration(tuple(self.noise_floor), tuple(self.edge_window), self.amplitude)


@dataclass
class LearningResult:
    model: clf.MlpModel
    templates: dict  # detector id -> mean preprocessed training window
    report: LearningReport
    fingerprints: tuple = field(repr=False, default=())


def acquire_learning_set(cfg: ScenarioConfig, amplitude: float | None = None):
    """Triggered captures from both detectors: ``(X, y, single)``.

    ``X`` holds one record per row (coherent average of ``coherent_k``
    captures), ``y`` the detector ids, ``single`` the first raw capture of
    each averaged record.
    """
    acq = cfg.acquisition
    pulse = scenario_pulse(cfg)
    amp = scenario_amplitude(cfg) if amplitude is None else amplitude
    n_w, K, L = acq.waveforms_per_detector, acq.coherent_k, acq.record_len
    raw, single = [], []
    for det, fp in enumerate(scenario_fingerprints(cfg)):
        clean = received_template(fp, pulse, L, amp, acq.sample_rate)
        rng = np.random.default_rng(derive_seed(cfg.master_seed, "learn_capture", det))
        caps = _capture(clean, cfg, rng, (n_w, K, L))
        raw.append(caps.mean(axis=1))
        single.append(caps[:, 0, :])
    return np.vstack(raw), np.repeat([0, 1], n_w), np.vstack(single)


def stratified_split(y, train_fraction: float, seed: int):
    """Per-class random split; every class keeps at least one row on each side."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    tr, te = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise ValueError(f"class {c} needs at least two records to split")
        n_tr = min(max(int(round(train_fraction * idx.size)), 1), idx.size - 1)
        perm = rng.permutation(idx)
        tr += list(perm[:n_tr])
        te += list(perm[n_tr:])
    return np.sort(tr), np.sort(te)


def correlation_analysis(P, y):
    """Co-location matrices for detectors 0 and 1, their cross matrix and the margin.

    The margin takes the smaller off-diagonal minimum of the two co-location
    matrices.
    """
    y = np.asarray(y)
    A, B = P[y == 0], P[y == 1]
    m_co = correlation_matrix(A, A)
    m_co_b = correlation_matrix(B, B)
    m_cross = correlation_matrix(A, B, kind="cross")
    co_vals = np.concatenate([m.values[~np.eye(m.n, dtype=bool)] for m in (m_co, m_co_b)])
    if co_vals.size == 0:
        raise ValueError("need at least two records per detector for a co-location margin")
    return m_co, m_co_b, m_cross, separability_margin(co_vals, m_cross, exclude_diagonal=False)


def fit_classifier(cfg: ScenarioConfig, F_train, y_train):
    """Train on band-excised records, windowed at the best start and at shifted starts.

    The shifted copies teach the network the jitter of the energy-maximal
    window start, which the high-pass band edge makes ill-defined.
    """
    cs, n = cfg.classifier, cfg.acquisition.excision_len
    shifts = range(-cs.shift_augment, cs.shift_augment + 1)
    Xtr = window_batch(F_train, n, shifts)
    ytr = np.repeat(np.asarray(y_train), len(shifts))
    dims = (n,) + tuple(cs.hidden) + (1,)
    tseed = derive_seed(cfg.master_seed, "train")
    model = clf.init_model(dims, seed=tseed, hidden_activation=cs.activation)
    tcfg = clf.TrainConfig(cs.learning_rate, cs.epochs, cs.batch_size, tseed, cs.optimizer,
                           target_loss=cs.target_loss)
    return clf.train(model, Xtr, ytr, tcfg)


def run_learning_phase(cfg: ScenarioConfig) -> LearningResult:
    """Triggered acquisition, alignment, training and evaluation for one scenario."""
    acq = cfg.acquisition
    fs = acq.sample_rate
    seed = cfg.master_seed

    # With jamming Eve's RF view of the clicks degrades toward coin flips.
    jam_ratio = cfg.countermeasures.jammer_sigma / max(signal_rms(cfg), 1e-300)
    misread = 0.5 * (1 - math.exp(-jam_ratio**2))
    pol = learn_polarization(ReceiverSim(0.0, misread), (0.0, 45.0, 90.0, 135.0), 200,
                             derive_seed(seed, "polarization"))
    ant = optimize_antenna_position(lambda d: snr_scale(cfg, d), cfg.antenna.positions,
                                    derive_seed(seed, "antenna"))
    amp = scenario_amplitude(cfg, ant.position)

    X, y, single = acquire_learning_set(cfg, amp)
    F = excise_frequency_array(X, fs, cfg.band)
    P = window_batch(F, acq.excision_len)
    tr, te = stratified_split(y, acq.train_fraction, derive_seed(seed, "split"))
    m_co, m_co_b, m_cross, sep = correlation_analysis(P, y)
    model, history = fit_classifier(cfg, F[tr], y[tr])
    ev = clf.evaluate(model, P[te], y[te])

    # Free-running detector calibration from the single (unaveraged) captures.
    W = cfg.detection.window
    quiet_len = acq.pre_trigger - W // 4
    if quiet_len > W:
        floor = estimate_noise_floor([row[:quiet_len] for row in single], W)
    else:
        floor = default_calibration(cfg).noise_floor
    dcfg = detection_config(cfg, floor)
    offsets = []
    for row in single:
        offs = [e - acq.pre_trigger for e, _ in detect_pulses(WaveformRecord(row, fs), dcfg)]
        # the hit nearest the known onset is the pulse; others are noise false alarms
        offs = [o for o in offs if abs(o) <= W]
        if offs:
            offsets.append(min(offs, key=abs))
    tol = cfg.detection.alignment_tolerance
    if offsets:
        edge = (min(offsets) - tol, max(offsets) + tol)
    else:
        edge = default_calibration(cfg).edge_window

    templates = {det: P[tr][y[tr] == det].mean(axis=0) for det in (0, 1)}
    report = LearningReport(
        accuracy=ev.accuracy, confusion=ev.confusion, separability=sep, m_co=m_co, m_co_b=m_co_b,
        m_cross=m_cross, polarization=pol, antenna=ant, amplitude=amp, noise_floor=floor,
        edge_window=edge, loss_history=history,
        inseparable=bool(sep.margin <= 0 and ev.accuracy < 0.6), master_seed=seed)
    return LearningResult(model, templates, report, scenario_fingerprints(cfg))


def detection_config(cfg: ScenarioConfig, floor) -> DetectionConfig:
    d = cfg.detection
    return DetectionConfig(window=d.window, k=d.k, refractory=d.refractory,
                           segment_len=cfg.acquisition.excision_len, edge_k=d.edge_k,
                           noise_floor=tuple(floor))


# --- intercept phase -----------------------------------------------------------


def key_clone_fidelity(eve_key, bob_key) -> float:
    """Fraction of matching bits over the indices both keys share."""
    ei, eb = np.asarray(eve_key.indices), np.asarray(eve_key.bits)
    bi, bb = np.asarray(bob_key.indices), np.asarray(bob_key.bits)
    common, ie, ib = np.intersect1d(ei, bi, return_indices=True)
    if common.size == 0:
        raise ValueError("eve and bob keys share no indices")
    return float(np.mean(eb[ie] == bb[ib]))


@dataclass
class AttackReport:
    classifier_accuracy: float
    separability_margin: float
    key_clone_fidelity: float
    bob_qber_with_eve: float
    bob_qber_without_eve: float
    detections: int
    true_pulses: int
    matched: int
    false_alarms: int
    missed: int
    guessed: int  # sifted indices with no aligned detection; Eve guessed the bit
    sifted_classifier_accuracy: float  # over sifted indices Eve actually classified
    sifted_length: int
    passive: bool
    master_seed: int
    session_seed: int
    session_length: int
    rho: float
    shielding_db: float
    jammer_sigma: float

    @property
    def detection_recall(self) -> float:
        return self.matched / self.true_pulses if self.true_pulses else 0.0


def _oracle(truth, rng):
    return truth


def _coin(truth, rng):
    return rng.integers(0, 2, truth.size)


def run_intercept_phase(cfg: ScenarioConfig, learned, session: qkd.QkdSession,
                        classifier="mlp", calibration: "Calibration | None" = None):
    """Eavesdrop on a completed session through the RF side channel.

    ``learned`` is a :class:`LearningResult` or a bare model. For a bare
    model the detector calibration is ``calibration`` if given, else
    :func:`default_calibration`.
    ``classifier`` is ``"mlp"``, ``"oracle"`` (a perfect side channel that
    never misses or misclassifies) or ``"coin"`` (random detector ids).
    Returns ``(eve_key, report)``.
    """
    if classifier not in ("mlp", "oracle", "coin"):
        raise ValueError(f"unknown classifier {classifier!r}")
    acq, sess = cfg.acquisition, cfg.session
    fs, L, S = acq.sample_rate, acq.record_len, sess.slot_len
    if any(r.detector_id not in (0, 1) for r in session.bob):
        raise ValueError("intercept needs the two-detector (active) receiver")
    before = qkd.transcript_text(session)

    if isinstance(learned, LearningResult):
        model, lrep = learned.model, learned.report
        cal = calibration or lrep.calibration
    else:
        model, lrep = learned, None
        cal = calibration or default_calibration(cfg)
    floor, edge, amp = cal.noise_floor, cal.edge_window, cal.amplitude
    if model is not None and model.n_inputs != acq.excision_len:
        raise ValueError(f"model expects {model.n_inputs} inputs, excision_len is {acq.excision_len}")
    if classifier == "mlp" and model is None:
        raise ValueError("mlp classifier needs a trained model")

    pulse = scenario_pulse(cfg)
    templates = [received_template(fp, pulse, L, amp, fs) for fp in scenario_fingerprints(cfg)]
    dcfg = detection_config(cfg, floor)
    seed = derive_seed(cfg.master_seed, "intercept", session.seed)
    rng = np.random.default_rng(seed)
    stub_rng = np.random.default_rng(derive_seed(seed, "stub"))

    n = session.n_photons
    truth = np.full(n, -1)
    for r in session.bob:
        truth[r.index] = r.detector_id
    guess = np.full(n, -1)
    detections = false_alarms = 0
    for c0 in range(0, n, sess.chunk_slots):
        c1 = min(n, c0 + sess.chunk_slots)
        buf = np.zeros((c1 - c0) * S)
        for i in range(c0, c1):
            if truth[i] >= 0:
                o = (i - c0) * S
                buf[o:o + L] += templates[truth[i]]
        stream = _capture(buf, cfg, rng, buf.shape)
        hits = detect_pulses(WaveformRecord(stream, fs), dcfg)
        detections += len(hits)
        slots, starts = [], []
        for e, _ in hits:
            k = int(math.floor((e - acq.pre_trigger - edge[0]) / S))
            off = e - (k * S + acq.pre_trigger)
            if 0 <= k < c1 - c0 and edge[0] <= off <= edge[1] and guess[c0 + k] < 0 \
                    and (c0 + k) not in slots:
                slots.append(c0 + k)
                starts.append(k * S)
            else:
                false_alarms += 1
        if not slots:
            continue
        slots = np.array(slots)
        if classifier == "mlp":
            recs = np.vstack([stream[s:s + L] for s in starts])
            Fx = excise_frequency_array(recs, fs, cfg.band)
            guess[slots] = clf.predict(model, window_batch(Fx, acq.excision_len))
        elif classifier == "oracle":
            guess[slots] = _oracle(truth[slots], stub_rng)
        else:
            guess[slots] = _coin(truth[slots], stub_rng)

    true_pulses = int(np.sum(truth >= 0))
    matched = int(np.sum((guess >= 0) & (truth >= 0)))
    false_alarms += int(np.sum((guess >= 0) & (truth < 0)))
    if classifier == "oracle":
        # perfect side channel: detection and classification both always right
        guess[truth >= 0] = truth[truth >= 0]

    kb = session.key_b
    idx = kb.indices
    eve_bits = guess[idx].copy()
    unseen = eve_bits < 0
    eve_bits[unseen] = stub_rng.integers(0, 2, int(unseen.sum()))
    eve_key = qkd.SiftedKey(idx, eve_bits)
    fidelity = key_clone_fidelity(eve_key, kb)
    seen = ~unseen
    acc_seen = float(np.mean(guess[idx][seen] == kb.bits[seen])) if seen.any() else 0.0
    allowance = float(unseen.mean())
    assert fidelity <= acc_seen + allowance + 1e-12, "clone fidelity exceeds classification channel"

    after = qkd.transcript_text(session)
    clean = qkd.run_session(session.n_photons, session.seed, sess.efficiency,
                            disclose_fraction=sess.disclose_fraction)
    passive = before == after and qkd.transcript_text(clean) == after

    report = AttackReport(
        classifier_accuracy=lrep.accuracy if lrep else float("nan"),
        separability_margin=lrep.separability.margin if lrep else float("nan"),
        key_clone_fidelity=fidelity, bob_qber_with_eve=session.qber,
        bob_qber_without_eve=clean.qber, detections=detections, true_pulses=true_pulses,
        matched=matched, false_alarms=false_alarms, missed=true_pulses - matched,
        guessed=int(unseen.sum()), sifted_classifier_accuracy=acc_seen, sifted_length=len(kb),
        passive=passive, master_seed=cfg.master_seed, session_seed=session.seed,
        session_length=session.n_photons, rho=cfg.fingerprint.rho,
        shielding_db=cfg.countermeasures.shielding_db, jammer_sigma=cfg.countermeasures.jammer_sigma)
    return eve_key, report


def run_reference_session(cfg: ScenarioConfig, n_photons: int | None = None) -> qkd.QkdSession:
    n = cfg.session.length if n_photons is None else n_photons
    return qkd.run_session(n, derive_seed(cfg.master_seed, "session"), cfg.session.efficiency,
                           disclose_fraction=cfg.session.disclose_fraction)


# --- countermeasure sweeps -----------------------------------------------------

SWEEP_PARAMS = {
    "rho": ("fingerprint", "rho"),
    "shielding_db": ("countermeasures", "shielding_db"),
    "jammer_sigma": ("countermeasures", "jammer_sigma"),
}


def with_param(cfg: ScenarioConfig, param: str, value) -> ScenarioConfig:
    group, name = SWEEP_PARAMS[param]
    return replace(cfg, **{group: replace(getattr(cfg, group), **{name: value})})


@dataclass
class SweepRow:
    value: float
    accuracy_mean: float
    accuracy_std: float
    fidelity_mean: float
    fidelity_std: float
    accuracies: tuple
    fidelities: tuple


@dataclass
class SweepTable:
    param: str
    trials: int
    rows: list

    @property
    def values(self):
        return [r.value for r in self.rows]

    def spearman(self, column: str = "accuracy_mean") -> float:
        v = [getattr(r, column) for r in self.rows]
        if len(v) < 2 or np.ptp(v) == 0:
            return 0.0
        return float(stats.spearmanr(self.values, v).statistic)


def countermeasure_sweep(base_cfg: ScenarioConfig, param: str, values, trials: int = 10,
                         intercept: bool = True, session_length: int | None = None) -> SweepTable:
    """Eve's accuracy and clone fidelity over a grid of one countermeasure knob.

    Each trial uses a fresh master seed derived from the base seed and the
    trial number, shared across grid points so comparisons are paired.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {sorted(SWEEP_PARAMS)}")
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("sweep grid is empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for v in values:
        accs, fids = [], []
        for t in range(trials):
            cfg = with_param(replace(base_cfg, master_seed=derive_seed(base_cfg.master_seed, "trial", t)),
                             param, v)
            learned = run_learning_phase(cfg)
            accs.append(learned.report.accuracy)
            if intercept:
                sess = run_reference_session(cfg, session_length)
                _, rep = run_intercept_phase(cfg, learned, sess)
                fids.append(rep.key_clone_fidelity)
        fm = float(np.mean(fids)) if fids else float("nan")
        fsd = float(np.std(fids)) if fids else float("nan")
        rows.append(SweepRow(v, float(np.mean(accs)), float(np.std(accs)), fm, fsd,
                             tuple(accs), tuple(fids)))
    return SweepTable(param, trials, rows)
