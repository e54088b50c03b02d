import csv
import json
import os
from pathlib import Path

import pytest

from dshadow.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_files(out):
    return {p.name: p.read_bytes() for p in Path(out).iterdir() if p.name != "manifest.json"}


def test_simulate_fibonacci(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(SCENARIOS / "fibonacci_simulate.json"), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "orbit.csv").open()))
    last = rows[-1]
    assert last["n"] == "10" and float(last["re(x_1)"]) == 89
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["result_files"] == ["orbit.csv", "summary.json"]
    assert manifest["input"]["task"] == "simulate"


def test_spectrum_geometric(tmp_path):
    out = tmp_path / "spec"
    assert main(["spectrum", "--config", str(SCENARIOS / "geometric_spectrum.json"), "--out", str(out)]) == 0
    doc = json.loads((out / "spectrum.json").read_text())
    assert any(abs(r["re"] - 0.75) <= 1e-10 and abs(r["im"]) <= 1e-10 for r in doc["roots"])


def test_missing_field_is_named(tmp_path, capsys):
    out = tmp_path / "bad"
    code = main(["simulate", "--config", str(SCENARIOS / "bad_missing_d.json"), "--out", str(out)])
    assert code == 2
    assert "system.d" in capsys.readouterr().err
    assert not out.exists()


def test_every_problem_is_listed(tmp_path, capsys):
    doc = {"schema": "dshadow/1", "task": "shadow", "system": {"r": -1, "kind": "autonomous", "matrices": {"A": [[[2]]]}},
           "params": {"delta": -1, "trials": 0}}
    assert main(["shadow", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    for field in ("system.d", "params.delta", "params.trials"):
        assert field in err


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2
    assert main(["simulate"]) == 2


def test_non_hyperbolic_dichotomy_fails(tmp_path, capsys):
    doc = {"schema": "dshadow/1", "task": "dichotomy",
           "system": {"d": 1, "r": 0, "kind": "periodic", "matrices": {"period": 2, "A": [[[[2]]], [[[0.5]]]]}}}
    out = tmp_path / "dich"
    assert main(["dichotomy", "--config", write(tmp_path, doc), "--out", str(out)]) == 1
    assert "not hyperbolic" in capsys.readouterr().err
    assert not out.exists()


def test_hyperbolic_kernel_rejected_by_resonate(tmp_path, capsys):
    doc = {"schema": "dshadow/1", "task": "resonate",
           "kernel": {"d": 1, "gamma": 1.0, "type": "finite", "terms": [[[[2, 0]]]]}, "params": {"steps": 10}}
    assert main(["resonate", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2
    assert "volterra" in capsys.readouterr().err


@pytest.mark.parametrize(
    "verb, config, files",
    [
        ("dichotomy", "fibonacci_dichotomy.json", {"gap_report.json", "dichotomy.json", "verification.json"}),
        ("dichotomy", "period2_dichotomy.json", {"gap_report.json", "dichotomy.json", "verification.json"}),
        ("perron", "scalar_perron.json", {"perron.csv", "perron.json"}),
        ("resonate", "resonant_kernel.json", {"growth.csv", "growth.json"}),
    ],
)
def test_scenarios_run(tmp_path, verb, config, files):
    out = tmp_path / verb
    assert main([verb, "--config", str(SCENARIOS / config), "--out", str(out)]) == 0
    assert set(os.listdir(out)) == files | {"manifest.json"}


def test_perron_values(tmp_path):
    out = tmp_path / "perron"
    main(["perron", "--config", str(SCENARIOS / "scalar_perron.json"), "--out", str(out)])
    rows = list(csv.DictReader((out / "perron.csv").open()))
    # forcing is 1 for n < 10 and 0 afterwards, so x(n) = -(1 - 2^(n - 10))
    assert len(rows) == 11
    for r in rows:
        n = int(r["n"])
        assert float(r["re(x_1)"]) == pytest.approx(-(1 - 2.0 ** (n - 10)), abs=1e-15)


def test_shadow_deterministic_across_threads(tmp_path, monkeypatch):
    doc = json.loads((SCENARIOS / "diag_shadow.json").read_text())
    doc["params"]["trials"] = 16
    cfg = write(tmp_path, doc)
    monkeypatch.setenv("DSHADOW_THREADS", "1")
    assert main(["shadow", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("DSHADOW_THREADS", "4")
    assert main(["shadow", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert read_files(tmp_path / "a") == read_files(tmp_path / "b")
    summary = json.loads((tmp_path / "a" / "shadow_summary.json").read_text())
    assert summary["eps_max"] <= summary["K_D"] * summary["delta"]


def test_seed_flag_changes_draws(tmp_path):
    doc = json.loads((SCENARIOS / "diag_shadow.json").read_text())
    doc["params"]["trials"] = 4
    cfg = write(tmp_path, doc)
    main(["shadow", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    main(["shadow", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    assert read_files(tmp_path / "a") != read_files(tmp_path / "b")


def test_verify_all_single_suite(tmp_path):
    out = tmp_path / "v"
    assert main(["verify-all", "--seed", "42", "--out", str(out)] + ["--config", write(
        tmp_path, {"schema": "dshadow/1", "task": "verify-all", "params": {"suite": "duality"}})]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and list(summary["suites"]) == ["duality"]
    assert summary["suites"]["duality"]["checks"]["duality"]["value"] <= 1e-9


def test_rerun_replaces_output(tmp_path):
    out = tmp_path / "sim"
    cfg = str(SCENARIOS / "fibonacci_simulate.json")
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    first = read_files(out)
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert read_files(out) == first
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".dshadow-")]
