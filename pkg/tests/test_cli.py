import subprocess
import sys

import numpy as np
import pytest

from meanflow.cli import main, parse_rho_list
from meanflow.errors import ConfigError
from meanflow.fileio import read_series, read_snapshot

BASE = """
[mesh]
resolution = 16
[flow]
rho = 4*pi
f = 1 + 0.5*cos(x)
u0 = 0.3*cos(y)
dt_init = 1e-3
residual_tol = 1e-8
record_every = 20
"""


@pytest.fixture
def cfg_file(tmp_path, monkeypatch):
    monkeypatch.setenv("MEANFLOW_OUTPUT", str(tmp_path / "out"))

    def make(extra=""):
        path = tmp_path / "exp.cfg"
        path.write_text(BASE + extra)
        return path
    return make


def report(tmp_path):
    lines = (tmp_path / "out" / "report.txt").read_text().splitlines()
    return {l.split()[0]: l for l in lines}


def test_run_converges(cfg_file, tmp_path, capsys):
    assert main(["run", "--config", str(cfg_file())]) == 0
    rep = report(tmp_path)
    assert rep["status"] == "status Converged"
    assert float(rep["final_residual"].split()[1]) <= 1e-8
    assert "hypothesis k > rho/(8 pi) holds" in rep["min"]
    assert "newton_comparison" in rep
    series = read_series(tmp_path / "out" / "series.csv")
    assert np.all(np.diff(series["energy"]) <= 1e-10 * (1 + np.abs(series["energy"][:-1])))
    snaps = sorted((tmp_path / "out" / "snapshots").iterdir())
    assert len(snaps) == 2
    assert read_snapshot(snaps[-1])[1] == series["t"][-1]
    assert "Converged" in capsys.readouterr().out


def test_run_max_time(cfg_file, tmp_path):
    assert main(["run", "--config", str(cfg_file("t_max = 0.01\n"))]) == 2
    assert report(tmp_path)["status"] == "status MaxTimeReached"


def test_run_underflow(cfg_file, tmp_path):
    assert main(["run", "--config", str(_underflow_cfg(cfg_file))]) == 3
    assert report(tmp_path)["status"] == "status StepUnderflow"


def _underflow_cfg(cfg_file):
    path = cfg_file()
    path.write_text(BASE.replace("dt_init = 1e-3", "dt_init = 0.5\ndt_min = 0.5\ndt_max = 0.5"))
    return path


def test_run_blowup(cfg_file, tmp_path):
    path = cfg_file()
    path.write_text(BASE.replace("u0 = 0.3*cos(y)", "u0 = 650*cos(y)"))
    assert main(["run", "--config", str(path)]) == 3
    assert report(tmp_path)["status"] == "status Blowup"


def test_run_is_deterministic(cfg_file, tmp_path):
    path = cfg_file("t_max = 0.2\n")
    main(["run", "--config", str(path)])
    first = (tmp_path / "out" / "series.csv").read_bytes()
    main(["run", "--config", str(path)])
    assert (tmp_path / "out" / "series.csv").read_bytes() == first


def test_invariance_reported_with_group(cfg_file, tmp_path):
    path = cfg_file()
    path.write_text(BASE.replace("0.3*cos(y)", "0.3*cos(2*y)") + "[group]\ngenerators = shift(0,8)\n")
    assert main(["run", "--config", str(path)]) == 0
    err = float(report(tmp_path)["max_invariance_error"].split()[1])
    assert err <= 1e-12


@pytest.mark.parametrize("text", ["[flow]\nrho = 1\nbogus = 1\n", "[flow]\nf = 1\n", "[flow]\nrho = 1\nf = -1\n"])
def test_config_errors_exit_1(tmp_path, text, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    for cmd in ("run", "stationary", "verify"):
        assert main([cmd, "--config", str(path)]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_exit_1(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.cfg")]) == 1


def test_stationary(cfg_file, tmp_path):
    assert main(["stationary", "--config", str(cfg_file())]) == 0
    mesh, t, u = read_snapshot(tmp_path / "out" / "stationary.txt")
    assert mesh.resolution == (16,) and t == 0.0
    assert "Converged" in (tmp_path / "out" / "stationary_report.txt").read_text()


def test_stationary_failure_exit_3(cfg_file, tmp_path):
    path = cfg_file("[newton]\nmax_iters = 1\nrho_continuation_steps = 1\nnewton_tol = 1e-15\n")
    assert main(["stationary", "--config", str(path)]) == 3
    assert "NoConvergence" in (tmp_path / "out" / "stationary_report.txt").read_text()


def test_verify(cfg_file, capsys):
    assert main(["verify", "--config", str(cfg_file())]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "all checks passed" in out


def test_verify_detects_corrupted_quadrature(cfg_file, capsys):
    assert main(["verify", "--config", str(cfg_file()), "--corrupt-quadrature"]) == 4
    assert "FAIL" in capsys.readouterr().out


def test_sweep(cfg_file, tmp_path):
    path = cfg_file("t_max = 5\n")
    assert main(["sweep", "--config", str(path), "--rho", "2*pi, 4*pi", "--jobs", "2"]) == 0
    rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "rho,status,final_residual,max_h1,wall_time"
    assert len(rows) == 3
    assert all(r.split(",")[1] in ("Converged", "MaxTimeReached") for r in rows[1:])
    assert float(rows[1].split(",")[0]) == pytest.approx(2 * np.pi)
    assert (tmp_path / "out" / "rho_001" / "series.csv").exists()


def test_sweep_empty_list_exit_1(cfg_file):
    assert main(["sweep", "--config", str(cfg_file()), "--rho", " , "]) == 1


def test_rho_list_parsing():
    assert parse_rho_list("1, 2*pi") == [1.0, 2 * np.pi]
    with pytest.raises(ConfigError):
        parse_rho_list("")
    with pytest.raises(ConfigError):
        parse_rho_list("1, x")


def test_module_entry_point_lists_keys():
    out = subprocess.run([sys.executable, "-m", "meanflow", "keys"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "[flow] rho" in out.stdout
