import csv
import json
import os

import pytest

from twoscale.cli import execute, main, run_experiment
from twoscale.config import ConfigError, load_config, parse_config
from twoscale.report import report, trend

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def _cfg(name):
    return load_config(os.path.join(CONFIG_DIR, name))


def test_unknown_key_names_the_key(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('experiment = "estimate"\n[sequence]\nkind = "spike"\nschedule = "0.5"\npath = "x"\n')
    with pytest.raises(ConfigError, match="unknown key 'sequence.path'"):
        load_config(str(p))
    assert main(["run", str(p)]) == 1
    assert "path" in capsys.readouterr().err


def test_unknown_integrand_and_sequence_rejected():
    with pytest.raises((ConfigError, KeyError, ValueError)):
        execute(parse_config({"experiment": "homogenize", "integrand": {"name": "nope"},
                              "operator": {"name": "zero", "d": 1, "N": 1}}))
    with pytest.raises((ConfigError, KeyError, ValueError)):
        execute(parse_config({"experiment": "estimate", "sequence": {"kind": "nope", "schedule": "0.5"}}))
    with pytest.raises(ConfigError):
        parse_config({"experiment": "teleport"})


def test_spike_estimate_run(tmp_path):
    out = tmp_path / "spike"
    assert run_experiment(_cfg("spike_estimate.toml"), str(out)) == 0
    names = set(os.listdir(out))
    assert {"ym.json", "summary.json", "checks.csv", "convergence.svg"} <= names
    svg = (out / "convergence.svg").read_text()
    assert "<dc:date>" not in svg
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["experiment"] == "estimate"


def test_gamma_csv_margins(tmp_path):
    out = tmp_path / "gamma"
    assert run_experiment(_cfg("gamma_harmonic.toml"), str(out)) == 0
    with open(out / "gamma.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["margin"]) >= -1e-3 for r in rows)
    assert (out / "margins.svg").exists()


def test_negative_structure_config_passes_as_expected(tmp_path):
    assert run_experiment(_cfg("structure_negative.toml"), str(tmp_path)) == 0


def test_report_empty_checks(tmp_path):
    files = report({"experiment": "estimate", "checks": []}, str(tmp_path))
    assert [os.path.basename(f) for f in files] == ["checks.csv"]
    assert (tmp_path / "checks.csv").read_text() == "name,passed,value,tol,margin\n"


def test_report_from_summary_path(tmp_path):
    summary = {"experiment": "gamma",
               "checks": [{"name": "a", "passed": True, "margin": 0.1}, {"name": "b", "passed": False, "margin": -0.2}],
               "series": {"convergence": [{"label": "err", "x": [0.5, 0.25, 0.125], "y": [1.0, 0.5, 0.25]}]}}
    p = tmp_path / "summary.json"
    p.write_text(json.dumps(summary))
    files = report(str(p), str(tmp_path / "r"))
    assert sorted(os.path.basename(f) for f in files) == ["checks.csv", "convergence.svg", "margins.svg"]


def test_trend_slope_and_monotone():
    t = trend([0.5, 0.25, 0.125], [1.0, 0.25, 0.0625])
    assert t["slope"] == pytest.approx(2.0) and t["monotone"]
    assert not trend([0.5, 0.25, 0.125], [1.0, 2.0, 0.5])["monotone"]


def test_cli_homogenize_and_pair(tmp_path, capsys):
    out = tmp_path / "h.json"
    assert main(["homogenize", "--f", "aniso_quad", "--op", "zero", "--z", "1.0", "--grid", "64",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert "1.73" in json.dumps(doc)
    bundle = tmp_path / "est"
    assert main(["estimate", "--seq", "spike", "--schedule", "2^-k,k=4..10", "--resolution", "1024",
                 "--param", "alpha=2.0", "--torus", "16", "--outdir", str(bundle)]) == 0
    pout = tmp_path / "p.json"
    assert main(["pair", "--ym", str(bundle / "ym.json"), "--f", "one", "--out", str(pout)]) == 0
    # f = 1 pairs to |Ω|; the spike lives on (-1, 1)
    assert json.loads(pout.read_text())["value"] == pytest.approx(2.0)
    assert main(["ym-diff", str(bundle / "ym.json"), str(bundle / "ym.json"), "--out", str(tmp_path / "d.json")]) == 0
    assert main(["barycenter", "--ym", str(bundle / "ym.json"), "--out", str(tmp_path / "b.json")]) == 0
    assert main(["report", "--summary", str(bundle / "summary.json"), "--out", str(tmp_path / "rep")]) == 0
    assert main(["pair", "--ym", str(tmp_path / "missing.json"), "--f", "one"]) == 1
