"""``rfqkd`` command-line front-end.

Subcommands: synth, dsp, train, attack learn, attack intercept, sweep, bell, demo.
Exit codes: 0 success, 2 config/usage error, 3 runtime error, 4 demo threshold failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import os
import sys
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import attack, classifier as clf, formats, qkd
from .attack import ScenarioConfig
from .config import ConfigError, config_from_items, dump_config, load_config
from .dsp import excise_frequency_array
from .emission import WaveformRecord

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_THRESHOLD = 0, 2, 3, 4

DEMO_THRESHOLDS = {"accuracy": 0.99, "key_clone_fidelity": 0.99}


class UsageError(ConfigError):
    """Bad or missing command-line inputs (exit code 2)."""


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    master_seed: int
    output_dir: Path
    files: list = field(default_factory=list)

    def write(self) -> Path:
        return formats.write_manifest(self.output_dir, self.command, self.config_path,
                                      self.master_seed, self.files)


# --- report emission -----------------------------------------------------------

def _write(path: Path, text: str, files: list) -> Path:
    path.write_text(text)
    files.append(path)
    return path


def _matrix_dat(values) -> str:
    return "\n".join(" ".join(formats.fmt(v) for v in row) for row in values) + "\n"


def emit_report(report, out_dir, fmt: str = "text", prefix: str = "") -> list:
    """Write a report as structured text files; returns the written paths.

    ``fmt="text"`` writes key-value/CSV blocks; ``fmt="gnuplot"`` also writes
    whitespace-separated column files for external plotting.
    """
    if fmt not in ("text", "gnuplot"):
        raise ValueError(f"unknown report format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    files: list = []
    plots = fmt == "gnuplot"

    if isinstance(report, attack.LearningReport):
        for name, m in (("m_co", report.m_co), ("m_co_b", report.m_co_b), ("m_cross", report.m_cross)):
            _write(out / f"{prefix}{name}.csv", formats.matrix_to_csv(m), files)
            if plots:
                _write(out / f"{prefix}{name}.dat", _matrix_dat(m.values), files)
        sep = report.separability
        text = formats.kv_block("learning", {
            "master_seed": report.master_seed,
            "accuracy": report.accuracy,
            "confusion": report.confusion.ravel(),
            "min_co": sep.min_co, "max_cross": sep.max_cross,
            "separability_margin": sep.margin, "separable": sep.separable,
            "inseparable": report.inseparable,
            "session_aborted": report.session_aborted,
            "polarization_angle": report.polarization.angle,
            "polarization_conclusive": report.polarization.conclusive,
            "polarization_p_value": report.polarization.p_value,
            "antenna_position": report.antenna.position,
            "amplitude": report.amplitude,
            "epochs_run": len(report.loss_history),
            "final_loss": report.loss_history[-1],
        })
        text += formats.table_block("loss", ["epoch", "loss"],
                                    [(i + 1, v) for i, v in enumerate(report.loss_history)])
        _write(out / f"{prefix}learn_report.txt", text, files)
        if plots:
            _write(out / f"{prefix}loss.dat", "".join(f"{i + 1} {formats.fmt(v)}\n"
                                                     for i, v in enumerate(report.loss_history)), files)
    elif isinstance(report, attack.AttackReport):
        items = dataclasses.asdict(report)
        items["detection_recall"] = report.detection_recall
        _write(out / f"{prefix}intercept_report.txt", formats.kv_block("intercept", items), files)
    elif isinstance(report, attack.SweepTable):
        cols = ["value", "accuracy_mean", "accuracy_std", "fidelity_mean", "fidelity_std"]
        rows = [[getattr(r, c) for c in cols] for r in report.rows]
        text = formats.kv_block("sweep", {"param": report.param, "trials": report.trials,
                                          "spearman_accuracy": report.spearman()})
        text += formats.table_block(f"sweep_{report.param}", cols, rows)
        _write(out / f"{prefix}sweep_{report.param}.txt", text, files)
        if plots:
            body = "# " + " ".join(cols) + "\n"
            body += "".join(" ".join(formats.fmt(v) for v in row) + "\n" for row in rows)
            _write(out / f"{prefix}sweep_{report.param}.dat", body, files)
    elif isinstance(report, dict):
        name = report.get("_name", "report")
        items = {k: v for k, v in report.items() if k != "_name"}
        _write(out / f"{prefix}{name}.txt", formats.kv_block(name, items), files)
    else:
        raise TypeError(f"no emitter for {type(report).__name__}")
    return files


# --- subcommands ---------------------------------------------------------------

def _records_from_dir(path) -> tuple[np.ndarray, np.ndarray, float]:
    d = Path(path)
    if not d.is_dir():
        raise UsageError(f"--data {d} is not a directory")
    recs = [formats.load_waveform(p) for p in sorted(d.iterdir())
            if p.suffix in (".txt", ".bin") and p.name.startswith("det")]
    if not recs:
        raise UsageError(f"no waveform files (det*.txt / det*.bin) in {d}")
    if any(r.label is None for r in recs):
        raise UsageError("every waveform file needs a detector label")
    if len({len(r) for r in recs}) != 1 or len({r.sample_rate for r in recs}) != 1:
        raise UsageError("waveform files differ in length or sample rate")
    return (np.vstack([r.samples for r in recs]), np.array([r.label for r in recs]),
            recs[0].sample_rate)


def _learning_data(cfg, args):
    if getattr(args, "data", None):
        X, y, fs = _records_from_dir(args.data)
        if fs != cfg.acquisition.sample_rate:
            raise UsageError(f"waveform sample rate {fs} differs from acquisition.sample_rate")
        return X, y
    X, y, _ = attack.acquire_learning_set(cfg)
    return X, y


def cmd_synth(cfg, args, out: Path, files: list):
    n = cfg.acquisition.waveforms_per_detector if args.count is None else args.count
    if n < 1:
        raise UsageError("--count must be >= 1")
    cfg = replace(cfg, acquisition=replace(cfg.acquisition, waveforms_per_detector=max(n, 2)))
    X, y, _ = attack.acquire_learning_set(cfg)
    dets = (0, 1) if args.detector == "both" else (int(args.detector),)
    ext = ".bin" if args.format == "bin" else ".txt"
    for det in dets:
        rows = X[y == det][:n]
        for i, row in enumerate(rows):
            w = WaveformRecord(row, cfg.acquisition.sample_rate, cfg.acquisition.pre_trigger, det)
            p = out / f"det{det}_{i:03d}{ext}"
            formats.save_waveform(p, w, binary=args.format == "bin")
            files.append(p)
    return EXIT_OK


def cmd_dsp(cfg, args, out: Path, files: list):
    X, y = _learning_data(cfg, args)
    F = excise_frequency_array(X, cfg.acquisition.sample_rate, cfg.band)
    P = attack.window_batch(F, cfg.acquisition.excision_len)
    m_co, m_co_b, m_cross, sep = attack.correlation_analysis(P, y)
    for name, m in (("m_co", m_co), ("m_co_b", m_co_b), ("m_cross", m_cross)):
        _write(out / f"{name}.csv", formats.matrix_to_csv(m), files)
        _write(out / f"{name}.dat", _matrix_dat(m.values), files)
    files += emit_report({"_name": "dsp_report", "records": len(y), "min_co": sep.min_co,
                          "max_cross": sep.max_cross, "separability_margin": sep.margin,
                          "separable": sep.separable}, out)
    return EXIT_OK


def cmd_train(cfg, args, out: Path, files: list):
    X, y = _learning_data(cfg, args)
    acq = cfg.acquisition
    F = excise_frequency_array(X, acq.sample_rate, cfg.band)
    tr, te = attack.stratified_split(y, acq.train_fraction,
                                     attack.derive_seed(cfg.master_seed, "split"))
    model, history = attack.fit_classifier(cfg, F[tr], y[tr])
    ev = clf.evaluate(model, attack.window_batch(F[te], acq.excision_len), y[te])
    p = out / "model.txt"
    formats.save_model(p, model)
    files.append(p)
    files += emit_report({"_name": "train_report", "train_records": len(tr),
                          "test_records": len(te), "accuracy": ev.accuracy,
                          "confusion": ev.confusion.ravel(), "epochs_run": len(history),
                          "final_loss": history[-1]}, out)
    return EXIT_OK


def _calibration_text(cal: attack.Calibration) -> str:
    return formats.kv_block("calibration", {
        "noise_floor_mean": cal.noise_floor[0], "noise_floor_std": cal.noise_floor[1],
        "edge_min": cal.edge_window[0], "edge_max": cal.edge_window[1],
        "amplitude": cal.amplitude})


def _load_calibration(path) -> attack.Calibration:
    b = formats.parse_report(Path(path).read_text())["calibration"]
    return attack.Calibration((float(b["noise_floor_mean"]), float(b["noise_floor_std"])),
                              (int(b["edge_min"]), int(b["edge_max"])), float(b["amplitude"]))


def cmd_attack_learn(cfg, args, out: Path, files: list):
    learned = attack.run_learning_phase(cfg)
    p = out / "model.txt"
    formats.save_model(p, learned.model)
    files.append(p)
    _write(out / "calibration.txt", _calibration_text(learned.report.calibration), files)
    tmpl = np.column_stack([learned.templates[0], learned.templates[1]])
    _write(out / "templates.dat", "# spd1 spd2\n" + _matrix_dat(tmpl), files)
    files += emit_report(learned.report, out, "gnuplot")
    return learned


def cmd_attack_intercept(cfg, args, out: Path, files: list, learned=None):
    if learned is None:
        if not args.model:
            raise UsageError("attack intercept needs --model; create one with `rfqkd attack learn`")
        mp = Path(args.model)
        if not mp.is_file():
            raise UsageError(f"model file not found: {mp}; create one with `rfqkd attack learn`")
        model = formats.load_model(mp)
        cp = Path(args.calibration) if args.calibration else mp.with_name("calibration.txt")
        cal = _load_calibration(cp) if cp.is_file() else None
        learned_arg = model
    else:
        learned_arg, cal = learned, None
    n = getattr(args, "session_length", None)
    session = attack.run_reference_session(cfg, n)
    eve_key, report = attack.run_intercept_phase(cfg, learned_arg, session, calibration=cal)
    if learned is None:
        lp = Path(args.model).with_name("learn_report.txt")
        if lp.is_file():
            lr = formats.parse_report(lp.read_text())["learning"]
            report = replace(report, classifier_accuracy=float(lr["accuracy"]),
                             separability_margin=float(lr["separability_margin"]))
    _write(out / "transcript.csv", qkd.transcript_text(session), files)
    _write(out / "eve_key.csv", "index,eve_bit,bob_bit\n" + "".join(
        f"{i},{e},{b}\n" for i, e, b in zip(eve_key.indices, eve_key.bits, session.key_b.bits)), files)
    files += emit_report(report, out)
    return report


def _floats(text: str, name: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(cfg, args, out: Path, files: list):
    values = _floats(args.values, "--values")
    if not values:
        raise UsageError("--values is empty")
    if args.param not in attack.SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {sorted(attack.SWEEP_PARAMS)}")
    table = attack.countermeasure_sweep(cfg, args.param, values, args.trials,
                                        intercept=not args.no_intercept,
                                        session_length=args.session_length)
    files += emit_report(table, out, "gnuplot")
    return table


def bell_report(settings, pairs: int, seed: int) -> dict:
    counts = qkd.sample_singlet(settings, pairs, seed)
    E = {f"E{a}{b}": qkd.correlator(counts, a, b) for a in (0, 1) for b in (0, 1)}
    local = max(qkd.chsh_S(qkd.local_deterministic_counts(o, settings=settings))
                for o in itertools.product((qkd.UP, qkd.DOWN), repeat=4))
    return {"_name": "bell_report", "settings": list(settings), "pairs_per_setting": pairs,
            "seed": seed, **E, "S": qkd.chsh_S(counts), "local_deterministic_max_S": local,
            "quantum_bound": 2 * np.sqrt(2)}


def cmd_bell(cfg, args, out: Path, files: list):
    settings = _floats(args.settings, "--settings")
    if len(settings) != 4:
        raise UsageError("--settings needs four angles: a, a', b, b'")
    rep = bell_report(tuple(settings), args.pairs,
                      attack.derive_seed(cfg.master_seed, "bell") if args.seed is None else args.seed)
    files += emit_report(rep, out)
    return rep


def cmd_demo(cfg, args, out: Path, files: list):
    synth_dir = out / "waveforms"
    synth_dir.mkdir(exist_ok=True)
    cmd_synth(cfg, argparse.Namespace(count=2, detector="both", format="text"), synth_dir, files)
    learned = cmd_attack_learn(cfg, args, out, files)
    report = cmd_attack_intercept(cfg, args, out, files, learned=learned)
    sweeps = {}
    for param, values in (("rho", (0.0, 0.5, 1.0)), ("jammer_sigma", (0.0, 0.02, 0.1))):
        table = attack.countermeasure_sweep(cfg, param, values, args.sweep_trials,
                                            session_length=args.sweep_session_length)
        files += emit_report(table, out, "gnuplot")
        sweeps[param] = table
    cmd_bell(cfg, argparse.Namespace(settings="0,90,45,-45", pairs=10000, seed=None), out, files)
    checks = {
        "accuracy": learned.report.accuracy >= DEMO_THRESHOLDS["accuracy"],
        "key_clone_fidelity": report.key_clone_fidelity >= DEMO_THRESHOLDS["key_clone_fidelity"],
        "separable": learned.report.separability.separable,
        "passive": report.passive,
        "rho_trend": sweeps["rho"].spearman() <= 0,
        "jammer_trend": sweeps["jammer_sigma"].spearman() <= 0,
    }
    files += emit_report({"_name": "demo_summary", **{f"pass_{k}": v for k, v in checks.items()},
                          "accuracy": learned.report.accuracy,
                          "key_clone_fidelity": report.key_clone_fidelity}, out)
    return EXIT_OK if all(checks.values()) else EXIT_THRESHOLD


# --- orchestration ---------------------------------------------------------------

def resolve_config(path=None, overrides=()) -> ScenarioConfig:
    """Config file (or defaults) + ``--set`` overrides + ``QRF_SEED``."""
    base = load_config(path) if path else ScenarioConfig()
    items = {}
    for o in overrides:
        if "=" not in o:
            raise ConfigError(f"--set expects key=value, got {o!r}")
        k, v = (s.strip() for s in o.split("=", 1))
        items[k] = v
    env = os.environ.get("QRF_SEED")
    if env is not None:
        items["master_seed"] = env
    if not items:
        return base
    merged = {k: v for k, v in (ln.split(" = ", 1) for ln in dump_config(base).splitlines())}
    merged.update(items)
    return config_from_items(merged)


COMMANDS = {
    "synth": cmd_synth, "dsp": cmd_dsp, "train": cmd_train, "attack learn": cmd_attack_learn,
    "attack intercept": cmd_attack_intercept, "sweep": cmd_sweep, "bell": cmd_bell,
    "demo": cmd_demo,
}


def run_scenario(cfg: ScenarioConfig, command: str, args: argparse.Namespace,
                 out_dir, config_path=None) -> tuple[int, list]:
    """Run one subcommand, write its effective config and manifest; returns (status, files)."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list = []
    _write(out / "effective_config.txt", dump_config(cfg), files)
    result = COMMANDS[command](cfg, args, out, files)
    status = result if isinstance(result, int) else EXIT_OK
    manifest = RunManifest(command, str(config_path) if config_path else None, cfg.master_seed,
                           out, files)
    manifest.write()
    return status, files


def _error_block(code: str, message: str) -> str:
    return formats.kv_block("error", {"code": code, "message": message.replace("\n", " ")})


def _module_code(exc: BaseException) -> str:
    mod = "rfqkd"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("rfqkd."):
            mod = name
    return f"{mod.split('.')[-1]}.{type(exc).__name__}"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario config file (key = value)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", default="rfqkd_out", help="output directory")

    p = argparse.ArgumentParser(prog="rfqkd", description="RF side-channel attack on BB84 detectors.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="synthesize labelled detector waveforms")
    s.add_argument("--count", type=int, help="waveforms per detector")
    s.add_argument("--detector", choices=("0", "1", "both"), default="both")
    s.add_argument("--format", choices=("text", "bin"), default="text")

    for name, hlp in (("dsp", "run the DSP chain and write correlation matrices"),
                      ("train", "train the classifier")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--data", help="directory of labelled waveform files (default: synthesize)")

    a = sub.add_parser("attack", help="eavesdropper phases")
    asub = a.add_subparsers(dest="phase", required=True)
    asub.add_parser("learn", parents=[common], help="learning phase: train and calibrate")
    s = asub.add_parser("intercept", parents=[common], help="key intercept on a fresh session")
    s.add_argument("--model", help="model file written by `attack learn`")
    s.add_argument("--calibration", help="calibration file (default: next to the model)")
    s.add_argument("--session-length", type=int, help="photons (default: session.length)")

    s = sub.add_parser("sweep", parents=[common], help="countermeasure sweep")
    s.add_argument("--param", required=True, choices=sorted(attack.SWEEP_PARAMS))
    s.add_argument("--values", required=True, help="comma-separated grid")
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--session-length", type=int, help="photons per intercept trial")
    s.add_argument("--no-intercept", action="store_true", help="learning phase only")

    s = sub.add_parser("bell", parents=[common], help="CHSH test on a sampled singlet")
    s.add_argument("--settings", default="0,90,45,-45", help="a,a',b,b' in degrees")
    s.add_argument("--pairs", type=int, default=100000, help="pairs per setting")
    s.add_argument("--seed", type=int)

    s = sub.add_parser("demo", parents=[common], help="end-to-end reference scenario")
    s.add_argument("--session-length", type=int, help="photons in the intercept session")
    s.add_argument("--sweep-trials", type=int, default=3)
    s.add_argument("--sweep-session-length", type=int, default=1000)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command + (f" {args.phase}" if args.command == "attack" else "")
    try:
        cfg = resolve_config(args.config, args.set)
        status, _ = run_scenario(cfg, command, args, args.out, args.config)
        return status
    except ConfigError as exc:
        kind = "usage" if isinstance(exc, UsageError) else "config"
        sys.stderr.write(_error_block(f"{kind}.invalid", str(exc)))
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error block
        sys.stderr.write(_error_block(_module_code(exc), str(exc)))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
