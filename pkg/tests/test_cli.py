import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from sensbo.cli import main
from sensbo.design import DesignMatrix

TINY_YAML = {
    "q0": 24,
    "validation_size": 4,
    "budget": 34,
    "stage1": [{"phase": "Exploration", "batches": 1, "batch_size": 2}],
    "stage2": [{"phase": "Exploration", "batches": 1, "batch_size": 2}],
    "stage4": [{"phase": "Exploration", "batches": 1, "batch_size": 2}],
    "anneal": {"levels": 20, "proposals_factor": 5},
    "log_surrogates": False,
    "gp_starts": 2,
}

MESH = "cells,eta\n260890,0.810187\n2015418,0.830857\n15608546,0.835337\n"


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_YAML))
    return path


def test_verify_mesh_study(tmp_path, capsys):
    path = tmp_path / "mesh.csv"
    path.write_text(MESH)
    assert main(["verify", "mesh-study", str(path), "--r2", "1.98", "--r3", "1.98"]) == 0
    out = capsys.readouterr().out
    assert "observed order p = 2.23842" in out
    assert "extrapolated eta = 0.836577" in out
    rows = list(csv.DictReader(io.StringIO(out.split("\n", 2)[2])))
    assert [float(r["e_percent"]) for r in rows] == pytest.approx([3.18, 0.69, 0.15], abs=0.02)


def test_verify_exit_codes(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0.8\n2,0.83\n3,0.82\n")
    assert main(["verify", "mesh-study", str(bad)]) == 4
    assert main(["verify", "mesh-study", str(tmp_path / "missing.csv")]) == 2
    short = tmp_path / "short.csv"
    short.write_text("1,0.8\n2,0.83\n")
    assert main(["verify", "mesh-study", str(short)]) == 2


def test_design_command(tmp_path, capsys):
    assert main(["design", "-q", "8", "-n", "3", "--criterion", "lhs", "--out-dir", str(tmp_path)]) == 0
    d = DesignMatrix.load(tmp_path / "design.csv")
    assert d.points.shape == (8, 3)
    assert main(["design", "-q", "1", "-n", "3", "--criterion", "lhs", "--out-dir", str(tmp_path)]) == 3


def test_bench_listing_and_evaluation(tmp_path, capsys):
    assert main(["bench"]) == 0
    listing = capsys.readouterr().out
    assert "TurbineEfficiencyProxy\t10D" in listing
    pts = tmp_path / "u.csv"
    pts.write_text("u1,u2,u3\n0.5,0.5,0.5\n")
    assert main(["bench", "--objective", "Ishigami", "--input", str(pts)]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[0]["y"]) == pytest.approx(0.0, abs=1e-15)
    assert main(["bench", "--objective", "Nope"]) == 2
    pts.write_text("0.5,0.5\n")
    assert main(["bench", "--objective", "Ishigami", "--input", str(pts)]) == 2


def test_gsa_command(tmp_path, capsys):
    code = main(["gsa", "--objective", "Ishigami", "--samples", "2000", "--scheme", "TD",
                 "--degree", "9", "--out-dir", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "sobol.csv")))
    total = {r["input"]: float(r["S_T"]) for r in rows}
    assert total["x3"] == pytest.approx(0.2437, abs=0.02)
    assert main(["gsa", "--objective", "Ishigami", "--mc", "--n-base", "4096"]) == 0


def test_run_stage_and_report(tmp_path, tiny_config, capsys):
    out = tmp_path / "run"
    common = ["--config", str(tiny_config), "--out-dir", str(out), "--no-figures"]
    assert main(["stage", *common]) == 0
    assert "completed S1_BOWithValidation" in capsys.readouterr().out
    assert json.loads((out / "state.json").read_text())["stage"] == "S2_BOFull"
    assert main(["run", *common, "--seed", "0"]) == 0
    assert "evaluations 34/34" in capsys.readouterr().out
    assert (out / "trajectory.csv").exists()
    assert main(["report", "--out-dir", str(out), "--no-figures"]) == 0
    assert main(["report", "--out-dir", str(tmp_path / "empty")]) == 2


def test_run_rejects_bad_configuration(tmp_path, tiny_config):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({**TINY_YAML, "budget": 10}))
    assert main(["run", "--config", str(bad), "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["run", "--config", str(tiny_config), "--objective", "Nope",
                 "--out-dir", str(tmp_path / "y")]) == 2
    short = tmp_path / "short.yaml"
    short.write_text(yaml.safe_dump({**TINY_YAML, "budget": 29}))
    assert main(["run", "--config", str(short), "--out-dir", str(tmp_path / "z"), "--fresh"]) == 3


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sensbo.cli", "bench"], capture_output=True, text=True)
    assert proc.returncode == 0 and "Ishigami" in proc.stdout
