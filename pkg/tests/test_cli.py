import json
import subprocess
import sys

import pytest

from qbnn.cli import main

FAST = ["--n-points", "12", "--n-samples", "10", "--warmup", "10", "--max-tree-depth", "3", "--hidden", "3", "--grid-points", "5"]


def test_ipe_scan_writes_csv(tmp_path, capsys):
    out = tmp_path / "noise.csv"
    code = main(["ipe-scan", "--qubits", "7", "--x-min", "-1", "--x-max", "1", "--grid", "20", "--draws", "10", "--seed", "0", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,estimate" and len(lines) == 201
    assert (tmp_path / "noise_exact.csv").exists()
    assert capsys.readouterr().out == ""


def test_ipe_scan_into_directory(tmp_path):
    assert main(["ipe-scan", "--qubits", "4", "--grid", "3", "--draws", "2", "--out", str(tmp_path / "scan")]) == 0
    assert (tmp_path / "scan" / "noise_scan.csv").exists()


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "results"
    code = main(["run", "--task", "linreg", "--mode", "qiqp", "--qubits", "10", "--seed", "0", "--out", str(out), *FAST])
    assert code == 0
    for name in ("metrics.json", "predictive_grid.csv", "cost_report.json"):
        assert (out / name).exists()
    printed = json.loads(capsys.readouterr().out)
    assert printed["mode"] == "QIQP"


def test_missing_qubits_exit_2(tmp_path, capsys):
    assert main(["run", "--mode", "qiqp", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr()
    assert "qubits" in err.err and err.out == ""


def test_unknown_config_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "CICP", "learning_rate": 0.1}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "QIQP", "qubits": 5, "seed": 4}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--mode", "cicp", "--out", str(out), *FAST]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["mode"] == "CICP" and metrics["seed"] == 4


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("QBNN_SEED", "7")
    out = tmp_path / "o"
    assert main(["run", "--out", str(out), *FAST]) == 0
    assert json.loads((out / "metrics.json").read_text())["seed"] == 7
    out2 = tmp_path / "o2"
    assert main(["run", "--seed", "2", "--out", str(out2), *FAST]) == 0
    assert json.loads((out2 / "metrics.json").read_text())["seed"] == 2


def test_runtime_failure_exit_1(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["run", "--task", "csv-regression", "--data-path", str(missing), "--out", str(tmp_path), *FAST]) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_grid_cells(tmp_path, capsys):
    code = main(["grid", "--modes", "cicp,qiqp", "--qubits", "4,6", "--seeds", "0", "--out", str(tmp_path), *FAST])
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cicp_s0", "qiqp_n4_s0", "qiqp_n6_s0"]
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_cost_report(tmp_path, capsys):
    assert main(["cost-report", "--layer-sizes", "1,5,5,1", "--k", "4", "--n", "4", "--m", "2", "--r-a", "1", "--r-e", "2", "--epsilon", "0.1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["omega"] == 12 and rep["speedup_inference"] is True
    assert main(["cost-report", "--k", "1", "--n", "1", "--m", "1"]) == 2


def test_bad_flag_exit_2(capsys):
    assert main(["run", "--max-tree-depth", "many"]) == 2
    assert main([]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qbnn", "run", "--mode", "qicp"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "qubits" in proc.stderr and proc.stdout == ""


def test_rerun_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--mode", "ciqp", "--qubits", "5", "--seed", "1", "--out", str(tmp_path / name), *FAST]) == 0
    for f in ("metrics.json", "predictive_grid.csv", "cost_report.json", "posterior_samples.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
