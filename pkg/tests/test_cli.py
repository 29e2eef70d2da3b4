import json
import subprocess
import sys

import pytest

from msre.cli import main
from msre.experiments.records import read_records


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_sweep_missing_key(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("MSRE_H", raising=False)
    code = main(["sweep", "--d", "1", "--n", "1", "--L-values", "4,8", "--samples-per-L", "1",
                 "--seed", "0", "--output", str(tmp_path / "r.jsonl")])
    assert code == 1
    assert "H" in capsys.readouterr().err


def test_sweep_env_and_file(tmp_path, monkeypatch):
    cfg = tmp_path / "c.txt"
    cfg.write_text("d=1\nn=1\nL_values=4 8 16\nsamples_per_L=3\nseed=2\n")
    monkeypatch.setenv("MSRE_H", "0.5")
    out = tmp_path / "r.jsonl"
    assert main(["sweep", "--config", str(cfg), "--output", str(out), "--jobs", "1"]) == 0
    rs = read_records(out)
    assert len(rs.records) == 9 and rs.header["config"]["H"] == 0.5

    summary = tmp_path / "s.csv"
    assert main(["summarize", "--records", str(out), "--out", str(summary)]) == 0
    assert summary.read_text().startswith("L,")
    est = tmp_path / "e.json"
    assert main(["exponents", "--records", str(out), "--min-samples", "2", "--out", str(est)]) == 0
    assert "xi" in json.loads(est.read_text())
    assert main(["plot-data", "--records", str(out), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p.gp").exists()


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("d=1\ncolour=red\n")
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_missing_file_is_io_error(tmp_path):
    assert main(["summarize", "--records", str(tmp_path / "none.jsonl"),
                 "--out", str(tmp_path / "s.csv")]) == 3


def test_solve_and_disorder_roundtrip(tmp_path):
    eta = tmp_path / "eta.bin"
    assert main(["disorder", "sample", "--d", "1", "--H", "0.5", "--L", "4", "--K", "8",
                 "--seed", "1", "--out", str(eta)]) == 0
    out = tmp_path / "res.json"
    assert main(["solve", "--disorder", str(eta), "--heights", "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["GE"] <= 0.0
    assert len(res["heights"]) == 9
    assert res["config"]["H"] == 0.5 and res["config"]["K"] == 8


def test_lattice_green(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["lattice", "green", "--d", "1", "--L", "1", "--out", str(out)]) == 0
    assert "1.0" in out.read_text()
    assert main(["lattice", "green", "--d", "2", "--L", "2", "--v", "1,0", "--out", str(out)]) == 0


def test_bad_parameter_exit_code(tmp_path):
    assert main(["disorder", "sample", "--d", "1", "--H", "1.5", "--L", "2", "--seed", "0",
                 "--out", str(tmp_path / "x.bin")]) == 1


def test_energy_check_identity(capsys):
    assert main(["energy", "check-identity", "--instances", "20"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "msre", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "sweep" in r.stdout
