import dataclasses
import subprocess
import sys

import numpy as np
import pytest

from rfqkd import attack as A
from rfqkd import cli, formats
from rfqkd.config import ConfigError, dump_config, load_config, parse_config, schema

SMALL = ["--set", "acquisition.waveforms_per_detector=16", "--set", "session.length=600",
         "--set", "session.chunk_slots=200"]


# --- configuration files -------------------------------------------------------

def test_minimal_config_takes_defaults():
    cfg = parse_config("# only a seed\nmaster_seed = 9\n")
    assert cfg == dataclasses.replace(A.ScenarioConfig(), master_seed=9)


def test_config_values_of_every_kind():
    cfg = parse_config("""
        fingerprint.rho = 0.5
        fingerprint.seed_a = 11
        fingerprint.resonances = 50e6:1e6, 90e6:2e6
        antenna.positions = 1.0, 3.0
        classifier.hidden = 16, 8
        fingerprint.seed_b = none
    """)
    assert cfg.fingerprint.rho == 0.5 and cfg.fingerprint.seed_a == 11
    assert cfg.fingerprint.resonances == ((50e6, 1e6), (90e6, 2e6))
    assert cfg.antenna.positions == (1.0, 3.0)
    assert cfg.classifier.hidden == (16, 8)
    assert cfg.fingerprint.seed_b is None


def test_config_round_trip():
    cfg = parse_config("master_seed = 3\nfingerprint.rho = 0.123456789\nband.f_low = 25e6\n")
    assert parse_config(dump_config(cfg)) == cfg
    assert set(ln.split(" = ")[0] for ln in dump_config(cfg).splitlines()) == set(schema())


def test_invalid_band_names_the_keys():
    with pytest.raises(ConfigError, match=r"band\.f_high.*band\.f_low"):
        parse_config("band.f_low = 300e6\nband.f_high = 30e6\n")


@pytest.mark.parametrize("text, match", [
    ("fingerprint.rhoo = 0.1", "unknown key"),
    ("fingerprint.rho = abc", "fingerprint.rho"),
    ("master_seed = 1\nmaster_seed = 2", "twice"),
    ("just words", "key = value"),
    ("fingerprint.resonances = 1e6", "fingerprint.resonances"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.cfg")


def test_env_seed_overrides(monkeypatch):
    monkeypatch.setenv("QRF_SEED", "42")
    assert cli.resolve_config(None, ["fingerprint.rho=0.2"]).master_seed == 42
    monkeypatch.delenv("QRF_SEED")
    assert cli.resolve_config(None, ["master_seed=5"]).master_seed == 5


# --- report emission -----------------------------------------------------------

@pytest.fixture(scope="module")
def small_run():
    cfg = cli.resolve_config(None, SMALL[1::2])
    learned = A.run_learning_phase(cfg)
    _, rep = A.run_intercept_phase(cfg, learned, A.run_reference_session(cfg))
    return cfg, learned, rep


def test_emit_learning_report(tmp_path, small_run):
    _, learned, _ = small_run
    files = cli.emit_report(learned.report, tmp_path, "gnuplot")
    names = {p.name for p in files}
    assert {"m_co.csv", "m_cross.csv", "m_co.dat", "learn_report.txt", "loss.dat"} <= names
    m = formats.matrix_from_csv((tmp_path / "m_cross.csv").read_text())
    assert m.n == 16 and np.array_equal(m.values, learned.report.m_cross.values)
    blocks = formats.parse_report((tmp_path / "learn_report.txt").read_text())
    assert len(blocks["loss"]["rows"]) == len(learned.report.loss_history)


def test_emit_attack_report_has_every_field_once(tmp_path, small_run):
    rep = small_run[2]
    cli.emit_report(rep, tmp_path)
    text = (tmp_path / "intercept_report.txt").read_text()
    block = formats.parse_report(text)["intercept"]
    for f in dataclasses.fields(rep):
        assert sum(ln.startswith(f.name + " = ") for ln in text.splitlines()) == 1
    assert float(block["key_clone_fidelity"]) == rep.key_clone_fidelity


def test_emit_sweep_rows_sorted(tmp_path):
    tab = A.SweepTable("rho", 1, [A.SweepRow(v, 1.0 - v, 0.0, 0.0, 0.0, (1.0 - v,), ()) for v in (0.0, 0.5, 1.0)])
    cli.emit_report(tab, tmp_path, "gnuplot")
    rows = formats.parse_report((tmp_path / "sweep_rho.txt").read_text())["sweep_rho"]["rows"]
    assert [float(r[0]) for r in rows] == [0.0, 0.5, 1.0]
    assert (tmp_path / "sweep_rho.dat").read_text().startswith("# value")


def test_emit_rejects_unknown(tmp_path):
    with pytest.raises(ValueError):
        cli.emit_report({}, tmp_path, "svg")
    with pytest.raises(TypeError):
        cli.emit_report(3.0, tmp_path)


# --- command line ----------------------------------------------------------------

def test_synth_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["synth", "--count", "2", "--out", str(tmp_path / d)] + SMALL) == 0
    a, b = (tmp_path / "a"), (tmp_path / "b")
    names = sorted(p.name for p in a.iterdir())
    assert "det0_001.txt" in names and "det1_000.txt" in names
    for n in names:
        if n != "manifest.txt":
            assert (a / n).read_bytes() == (b / n).read_bytes()
    man = (a / "manifest.txt").read_text()
    assert f"sha256 {formats.sha256_file(a / 'det0_000.txt')}  det0_000.txt" in man


def test_train_and_dsp_from_files(tmp_path):
    data = tmp_path / "w"
    assert cli.main(["synth", "--count", "8", "--format", "bin", "--out", str(data)] + SMALL) == 0
    assert cli.main(["dsp", "--data", str(data), "--out", str(tmp_path / "d")] + SMALL) == 0
    assert formats.matrix_from_csv((tmp_path / "d" / "m_co.csv").read_text()).n == 8
    assert cli.main(["train", "--data", str(data), "--out", str(tmp_path / "t")] + SMALL) == 0
    assert (tmp_path / "t" / "model.txt").is_file()
    assert cli.main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "t")]) == 2


def test_learn_then_intercept(tmp_path):
    assert cli.main(["attack", "learn", "--out", str(tmp_path / "l")] + SMALL) == 0
    assert cli.main(["attack", "intercept", "--model", str(tmp_path / "l" / "model.txt"),
                     "--out", str(tmp_path / "i")] + SMALL) == 0
    block = formats.parse_report((tmp_path / "i" / "intercept_report.txt").read_text())["intercept"]
    assert float(block["key_clone_fidelity"]) >= 0.95
    assert block["passive"] == "true"
    key = (tmp_path / "i" / "eve_key.csv").read_text().splitlines()
    assert key[0] == "index,eve_bit,bob_bit" and len(key) > 200


def test_intercept_without_model_is_usage_error(tmp_path, capsys):
    assert cli.main(["attack", "intercept", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("[error]") and "attack learn" in err


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("band.f_low = 300e6\nband.f_high = 30e6\n")
    assert cli.main(["bell", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "band.f_low" in capsys.readouterr().err


def test_bell_command(tmp_path):
    assert cli.main(["bell", "--pairs", "20000", "--seed", "1", "--out", str(tmp_path)]) == 0
    b = formats.parse_report((tmp_path / "bell_report.txt").read_text())["bell_report"]
    assert abs(float(b["S"]) - 2 * np.sqrt(2)) < 0.05
    assert float(b["local_deterministic_max_S"]) == 2.0
    assert cli.main(["bell", "--settings", "0,1", "--out", str(tmp_path)]) == 2


def test_sweep_command(tmp_path):
    rc = cli.main(["sweep", "--param", "shielding_db", "--values", "40,0", "--trials", "1",
                   "--no-intercept", "--out", str(tmp_path)] + SMALL)
    assert rc == 0
    rows = formats.parse_report((tmp_path / "sweep_shielding_db.txt").read_text())
    assert [r[0] for r in rows["sweep_shielding_db"]["rows"]] == ["0", "40"]


def test_reduced_demo(tmp_path):
    rc = cli.main(["demo", "--out", str(tmp_path), "--sweep-trials", "1",
                   "--sweep-session-length", "300"] + SMALL)
    summary = formats.parse_report((tmp_path / "demo_summary.txt").read_text())["demo_summary"]
    assert rc == (0 if all(v == "true" for k, v in summary.items() if k.startswith("pass_")) else 4)
    assert summary["pass_passive"] == "true"
    assert (tmp_path / "manifest.txt").is_file()
    assert (tmp_path / "effective_config.txt").read_text().startswith("master_seed = 0")


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "rfqkd.cli", "bell", "--pairs", "1000",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
