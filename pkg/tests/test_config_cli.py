import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from collapselab import rel_kernels as R
from collapselab.cli import main
from collapselab.config import ConfigError, parse_quantity, parse_scenarios, scenario_to_text

SMALL = """
# small scenarios for fast checks
[born]
experiment = gambler_ruin
seed = 3
lambda = 1 1/tu
t_final = 4 tu
n_steps = 1600
trajectories = 400

[params]
experiment = parameter_report
a = 1e-5 cm
"""


def test_parse_defaults_and_units():
    sc = parse_scenarios(SMALL, "small.ini")
    assert [s.name for s in sc] == ["born", "params"]
    assert sc[0].parameters["amplitudes"] == (0.6, 0.8)
    assert sc[0].parameters["t_final"] == 4.0
    assert sc[1].parameters["a"] == pytest.approx(1e-5)


@pytest.mark.parametrize("text, value", [("1 um", 1e-4), ("2 m", 200.0), ("3e-5 cm", 3e-5)])
def test_length_units(text, value):
    assert parse_quantity(text, "length", "x") == pytest.approx(value)


def test_missing_unit_is_an_error_with_location():
    with pytest.raises(ConfigError, match=r"bad.ini:3 \[x\] a"):
        parse_scenarios("[x]\nexperiment = parameter_report\na = 1e-5\n", "bad.ini")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_scenarios("[x]\nexperiment = kernel_scan\ncolour = red\n")


def test_unknown_experiment_rejected():
    with pytest.raises(ConfigError, match="unknown experiment"):
        parse_scenarios("[x]\nexperiment = teleport\n")


@given(st.floats(1e-8, 1e3), st.integers(0, 10**6), st.sampled_from(["cm", "um", "nm", "m"]))
def test_scenario_text_round_trip(a, seed, unit):
    text = f"[s]\nexperiment = parameter_report\nseed = {seed}\na = {a!r} {unit}\nlambda = 1e-16 1/s\n"
    (sc,) = parse_scenarios(text)
    (back,) = parse_scenarios(scenario_to_text(sc))
    assert back == sc


def test_run_writes_outputs_and_echoes_parameters(tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    assert main(["run", str(cfg), "--output", str(tmp_path / "out"), "--check"]) == 0
    doc = json.loads((tmp_path / "out" / "born" / "results.json").read_text())
    assert doc["seed"] == 3 and doc["check"] is True
    assert 0.0 <= doc["results"]["fraction_0"] <= 1.0
    echoed = "[born]\n" + "\n".join(f"{k} = {v}" for k, v in doc["parameters"].items())
    assert parse_scenarios(echoed)[0] == parse_scenarios(SMALL)[0]
    header = (tmp_path / "out" / "born" / "detection_nonlinear.csv").read_text().splitlines()[0]
    assert header == "time,fraction_0,fraction_1"
    assert (tmp_path / "out" / "params" / "report.txt").exists()


def test_run_is_deterministic_apart_from_timestamp(tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    docs = []
    for k in range(2):
        main(["run", str(cfg), "--output", str(tmp_path / f"o{k}"), "--jobs", str(k + 1)])
        d = json.loads((tmp_path / f"o{k}" / "born" / "results.json").read_text())
        d.pop("timestamp")
        docs.append(d)
    assert docs[0] == docs[1]


def test_env_output_dir(tmp_path, monkeypatch):
    cfg = tmp_path / "p.ini"
    cfg.write_text("[p]\nexperiment = parameter_report\n")
    monkeypatch.setenv("COLLAPSELAB_OUTPUT", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "p" / "results.json").exists()


def test_empty_config_writes_nothing(tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("# nothing here\n")
    assert main(["run", str(cfg), "--output", str(tmp_path / "out")]) == 0
    assert not (tmp_path / "out").exists()


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\nexperiment = parameter_report\na = 1e-5\n")
    assert main(["run", str(bad)]) == 1
    pre = tmp_path / "pre.ini"
    pre.write_text("[x]\nexperiment = gambler_ruin\namplitudes = 1, 0, 0\n")
    assert main(["run", str(pre), "--output", str(tmp_path / "o")]) == 2
    assert main(["kernel-scan", "--kind", "nonrel", "--a", "-1"]) == 2


def test_csl_rates_reports_energy_gain(tmp_path):
    cfg = tmp_path / "grw.ini"
    cfg.write_text("[grw]\nexperiment = csl_rates\nn_particles = 1e24 nucleons\n")
    code = main(["run", str(cfg), "--output", str(tmp_path / "o"), "--check"])
    doc = json.loads((tmp_path / "o" / "grw" / "results.json").read_text())
    assert "energy_gain" in doc["results"]
    assert code in (0, 3)


def test_kernel_scan_csv(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernel-scan", "--kind", "spacelike", "--a", "1", "--n-points", "5", "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "argument,value" and len(lines) == 6
    x, v = (float(t) for t in lines[2].split(","))
    # 17 significant digits reproduce the double exactly
    assert v == R.tachyon_kernel_exact(x, 1.0, "spacelike")


def test_report_params(capsys):
    assert main(["report-params", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["a_planckon"]["unit"] == "cm"
