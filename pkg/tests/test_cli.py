import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from eulermix.cli import EXIT_CERTIFICATE, EXIT_INVALID, EXIT_OK, main
from eulermix.grid import GridMeasure, interval_grid, lebesgue
from eulermix.transport import uniform_on

ROOT = Path(__file__).resolve().parents[1]
INSTANCES = ROOT / "instances"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(path, data):
    path.write_text(json.dumps(data))
    return path


@pytest.fixture
def halves_files(tmp_path):
    g = interval_grid(16)
    left = write(tmp_path / "left.json", uniform_on(g, range(8)).to_dict())
    right = write(tmp_path / "right.json", uniform_on(g, range(8, 16)).to_dict())
    return left, right


def test_solve_diagonal_lebesgue(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "solve", INSTANCES / "diagonal-leb.json", "--out", out)
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["objective"] <= 1e-8
    assert json.loads(stdout)["certificate_passed"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"instance", "config", "seed", "threads", "version", "started", "finished", "out"} <= set(manifest)
    assert Path(manifest["instance"]).is_absolute()


def test_solve_swap_then_verify(tmp_path, capsys):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "solve", INSTANCES / "swap-2.json", "--out", out,
                     "--tol-convexity", "1e-6", "--seed", "4")
    assert code == EXIT_OK
    with open(out / "residuals.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(float(r["convexity_residual"]) >= -1e-6 for r in rows)
    with open(out / "entropy_profile.csv") as fh:
        assert next(csv.reader(fh)) == ["k", "t", "H_Q"]
    code, stdout, _ = run(capsys, "verify", out / "report.json")
    assert code == EXIT_OK and json.loads(stdout)["ok"] is True


def test_reports_are_byte_identical_across_runs_and_threads(tmp_path, capsys):
    inst = INSTANCES / "mirrored-halves-32.json"
    for name, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        assert run(capsys, "solve", inst, "--out", tmp_path / name, "--threads", threads)[0] == EXIT_OK
    reports = [(tmp_path / n / "report.json").read_bytes() for n in "abc"]
    assert reports[0] == reports[1] == reports[2]
    for n in "bc":
        assert ((tmp_path / n / "entropy_profile.csv").read_bytes()
                == (tmp_path / "a" / "entropy_profile.csv").read_bytes())


def test_schedule_and_config_file(tmp_path, capsys):
    config = write(tmp_path / "config.json", {"tol_objective": 1e-9, "polish_rounds": 5})
    code, _, _ = run(capsys, "solve", INSTANCES / "swap-2.json", config, "--out", tmp_path / "r",
                     "--schedule", '[{"N": 2, "q": 2}, {"N": 2, "q": 8}]')
    assert code == EXIT_OK
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert [s["params"]["q"] for s in report["stages"]] == [2, 8]
    assert report["config"]["tol_objective"] == 1e-9


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"shape": [4]},\n  "boundary": [,]}')
    code, _, err = run(capsys, "solve", bad, "--out", tmp_path / "r")
    assert code == EXIT_INVALID
    diag = json.loads(err.strip().splitlines()[-1])
    assert diag["line"] == 2 and diag["column"] == 16


def test_invalid_inputs_exit_2(tmp_path, capsys):
    data = json.loads((INSTANCES / "swap-2.json").read_text())
    data["params"]["q"] = 0.5
    code, _, err = run(capsys, "solve", write(tmp_path / "q.json", data), "--out", tmp_path / "r")
    assert code == EXIT_INVALID and json.loads(err)["path"] == "params/q"
    data = json.loads((INSTANCES / "swap-2.json").read_text())
    data["boundary"] = [data["boundary"][0] | {"weight": 1.0}]
    code, _, err = run(capsys, "solve", write(tmp_path / "c.json", data), "--out", tmp_path / "r")
    assert code == EXIT_INVALID and "Lebesgue" in json.loads(err)["error"]
    code, _, _ = run(capsys, "solve", tmp_path / "missing.json", "--out", tmp_path / "r")
    assert code == EXIT_INVALID
    code, _, _ = run(capsys, "solve", INSTANCES / "swap-2.json", "--out", tmp_path / "r",
                     "--schedule", '{"N": 2}')
    assert code == EXIT_INVALID
    code, _, err = run(capsys, "solve", INSTANCES / "swap-2.json",
                       write(tmp_path / "cfg.json", {"stepsize": 1}), "--out", tmp_path / "r")
    assert code == EXIT_INVALID and "stepsize" in json.loads(err)["error"]


def test_verify_examples(tmp_path, capsys):
    report = write(tmp_path / "report.json", {
        "tol_convexity": 1e-6,
        "entropy_profile": [{"k": k, "t": k / 4, "H": 0.0} for k in range(5)]})
    code, stdout, _ = run(capsys, "verify", report)
    assert code == EXIT_OK and json.loads(stdout)["min_residual"] == 0.0
    profile = tmp_path / "entropy_profile.csv"
    profile.write_text("k,t,H_Q\n0,0.0,0.5\n1,0.25,0.1\n2,0.5,0.4\n3,0.75,0.1\n4,1.0,0.5\n")
    code, stdout, _ = run(capsys, "verify", report)
    assert code == EXIT_CERTIFICATE and json.loads(stdout)["ok"] is False
    code, _, _ = run(capsys, "verify", write(tmp_path / "r2.json", {"entropy_profile": []}))
    assert code == EXIT_INVALID
    profile.write_text("k,t,H\n0,0,0\n")
    assert run(capsys, "verify", report)[0] == EXIT_INVALID


def test_w2_command(halves_files, capsys):
    code, out, _ = run(capsys, "w2", *halves_files)
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["w2"] == pytest.approx(0.5) and data["w2_squared"] == pytest.approx(0.25)
    code, out, _ = run(capsys, "w2", *halves_files, "--epsilon", "1e-3")
    assert abs(json.loads(out)["w2_squared"] - 0.25) <= 5e-3


def test_w2_rejects_grid_mismatch(tmp_path, capsys):
    a = write(tmp_path / "a.json", lebesgue(interval_grid(4)).to_dict())
    b = write(tmp_path / "b.json", lebesgue(interval_grid(5)).to_dict())
    assert run(capsys, "w2", a, b)[0] == EXIT_INVALID
    c = write(tmp_path / "c.json", {"grid": {"shape": [2]}, "masses": [0.7, 0.7]})
    assert run(capsys, "w2", a, c)[0] == EXIT_INVALID


def test_heat_command_on_lebesgue(tmp_path, capsys):
    leb = lebesgue(interval_grid(8))
    path = write(tmp_path / "leb.json", leb.to_dict())
    code, out, _ = run(capsys, "heat", path, "--time", "0.5")
    assert code == EXIT_OK
    assert GridMeasure.from_dict(json.loads(out)).masses.tolist() == leb.masses.tolist()
    code, out, _ = run(capsys, "heat", path, "--time", "0.1", "--out", tmp_path / "o.json")
    assert code == EXIT_OK and (tmp_path / "o.json").exists()
    assert run(capsys, "heat", path, "--time", "-1")[0] == EXIT_INVALID


def test_interp_command(halves_files, capsys):
    code, out, _ = run(capsys, "interp", *halves_files, "--t", "0")
    assert code == EXIT_OK
    assert json.loads(out) == json.loads(halves_files[0].read_text())
    code, out, _ = run(capsys, "interp", *halves_files, "--t", "0.5")
    mid = GridMeasure.from_dict(json.loads(out))
    assert mid.masses[4:12].sum() == pytest.approx(1.0)
    assert run(capsys, "interp", *halves_files, "--t", "2")[0] == EXIT_INVALID


def test_module_entry_point_and_logging(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eulermix", "solve",
                           str(INSTANCES / "diagonal-leb.json"), "--out", str(tmp_path / "r")],
                          capture_output=True, text=True, env={"EULERMIX_LOG": "INFO",
                                                               "PATH": "/usr/bin:/bin"})
    assert proc.returncode == EXIT_OK
    assert "INFO" in proc.stderr
    version = subprocess.run([sys.executable, "-m", "eulermix", "--version"],
                             capture_output=True, text=True)
    assert version.stdout.startswith("eulermix ")
