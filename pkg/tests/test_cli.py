import json
import os

import numpy as np
import pytest

from meppflow.cli import main

DIFFUSION = """\
format = 1

[grid]
n = 32
length = 1.0
bc = periodic

[state]
name = rho
kind = conserved
ic = 1 + 0.5*sin(2*pi*x)

[functional]
variant = boltzmann

[metric]
variant = wasserstein
M = rho
face_mean = log_mean

[time]
dt = 1e-4
steps = 40
scheme = semi_implicit

[noise]
epsilon = 0.2
seed = 11
"""


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "diffusion.mod"
    path.write_text(DIFFUSION)
    return str(path)


def test_run_writes_outputs(model_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--model", model_file, "--out", str(out)]) == 0
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,x,var,value"
    assert len(traj) == 1 + 41 * 32
    diag = (out / "diagnostics.csv").read_text().splitlines()
    assert diag[0] == "t,S,mass,Phi,Psi,dSdt"


def test_run_overrides(model_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--model", model_file, "--out", str(out),
                 "--steps", "5", "--scheme", "explicit"]) == 0
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert len(traj) == 1 + 6 * 32


def test_run_outputs_byte_identical(model_file, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    main(["run", "--model", model_file, "--out", str(out_a)])
    main(["run", "--model", model_file, "--out", str(out_b)])
    assert (out_a / "trajectory.csv").read_bytes() == \
        (out_b / "trajectory.csv").read_bytes()
    assert (out_a / "diagnostics.csv").read_bytes() == \
        (out_b / "diagnostics.csv").read_bytes()


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["run", "--out", "somewhere"])
    assert err.value.code == 2


def test_unknown_flag_exits_2(model_file):
    with pytest.raises(SystemExit) as err:
        main(["run", "--model", model_file, "--out", "x", "--fast"])
    assert err.value.code == 2


def test_model_error_exits_1(tmp_path):
    bad = tmp_path / "bad.mod"
    bad.write_text("format = 2\n")
    assert main(["run", "--model", str(bad), "--out", str(tmp_path)]) == 1


def test_verify_clean_build_exits_0(model_file, capsys):
    assert main(["verify", "--model", model_file]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert "FAIL" not in out


def test_sample_writes_ensemble(model_file, tmp_path):
    out = tmp_path / "samples"
    code = main(["sample", "--model", model_file, "--trajectories", "4",
                 "--out", str(out), "--eps", "0.1", "--seed", "3"])
    assert code == 0
    files = sorted(os.listdir(out))
    assert "ensemble.json" in files
    assert sum(f.startswith("trajectory_") for f in files) == 4
    summary = json.loads((out / "ensemble.json").read_text())
    assert summary["epsilon"] == 0.1
    assert summary["fd_check"]["passed"] is True
    mean_rho = np.array([float(v) for v in summary["mean_final_field"]["rho"]])
    assert mean_rho.shape == (32,)


def test_rate_on_deterministic_run(model_file, tmp_path):
    out = tmp_path / "out"
    main(["run", "--model", model_file, "--out", str(out)])
    report = tmp_path / "report.json"
    code = main(["rate", "--model", model_file,
                 "--path", str(out / "trajectory.csv"),
                 "--out", str(report)])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["rate_value"] < 1e-4
    assert payload["identity_residual_max"] < 1e-10
    assert len(payload["series"]) == 41


def test_run_coupled_model(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--model", "models/interface.mod", "--out", str(out),
                 "--steps", "20"])
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 1 + 21 * 64 * 2  # two variables
    assert any(",phi," in ln for ln in lines[1:3])
    diag = (out / "diagnostics.csv").read_text().splitlines()
    assert len(diag) == 22


def test_verify_without_model(capsys):
    assert main(["verify"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_check_fd_exits_0(model_file):
    assert main(["check-fd", "--model", model_file, "--draws", "2000",
                 "--probes", "8"]) == 0
