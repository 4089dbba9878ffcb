import json
import math

import pytest

from vecplateau.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NONCONVERGENCE, EXIT_OK, SuiteConfig, main
from vecplateau.plateau_integral import solve_integral
from vecplateau import instances


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_solve_integral_triangle(capsys, tmp_path):
    svg = tmp_path / "t.svg"
    code, out = run(capsys, "--out", str(tmp_path), "solve", "--coeff", "integral", "--p", "inf",
                    "--instance", "triangle", "--svg", str(svg))
    assert code == EXIT_OK
    data = json.loads(out.out)
    assert data["value"] == pytest.approx(math.sqrt(3), abs=1e-4)
    assert (tmp_path / "solution.json").exists()
    assert svg.read_text().startswith("<svg")


def test_solve_normal_reports_band(capsys):
    code, out = run(capsys, "solve", "--coeff", "normal", "--p", "2", "--instance", "dipole", "--grid", "33")
    assert code == EXIT_OK
    data = json.loads(out.out)
    lo, hi = data["distortion_band"]
    assert lo <= 1.0 <= hi and data["gap"] >= 0


def test_solve_nonconvergence_exit_code(capsys):
    code, _ = run(capsys, "--tol", "1e-12", "solve", "--coeff", "normal", "--p", "2", "--instance", "pentagon",
                  "--grid", "17", "--method", "admm")
    assert code == EXIT_NONCONVERGENCE


def test_norms_commands(capsys):
    code, out = run(capsys, "norms", "--matrix", "[[1, 0], [0, 1]]", "--p", "inf")
    assert code == EXIT_OK
    data = json.loads(out.out)
    assert data["value"] == pytest.approx(math.sqrt(2), abs=1e-9)
    assert data["upper"] - data["lower"] <= 1e-6
    code, out = run(capsys, "norms", "--kind", "comass", "--matrix", "[[1, 0], [0, 1]]", "--p", "inf")
    assert json.loads(out.out)["value"] == pytest.approx(math.sqrt(2))
    code, out = run(capsys, "norms", "--kind", "nuclear", "--matrix", "[[3, 0], [0, 4]]", "--p", "2")
    assert json.loads(out.out)["value"] == pytest.approx(7.0, rel=1e-6)


def test_energy_and_lift(capsys, tmp_path):
    T = solve_integral(instances.steiner_triangle(), 2).current
    cur = tmp_path / "T.json"
    T.to_json(cur)
    code, out = run(capsys, "energy", "--current", str(cur), "--eps", "0.05", "--p", "2")
    assert code == EXIT_OK
    data = json.loads(out.out)
    assert data["H_p"] <= data["E_p"] + 1e-9
    code, out = run(capsys, "lift", "--current", str(cur), "--cuts", str(cur), "--eps", "0.05", "--p", "2")
    assert code == EXIT_OK
    data = json.loads(out.out)
    assert data["jump_cost"] == pytest.approx(2 * math.pi * T.mass(2))


def test_energy_rejects_wide_mollifier(capsys, tmp_path):
    T = solve_integral(instances.steiner_triangle(), 2).current
    cur = tmp_path / "T.json"
    T.to_json(cur)
    code, _ = run(capsys, "energy", "--current", str(cur), "--eps", "0.5")
    assert code == EXIT_CONFIG


def test_render(capsys, tmp_path):
    T = solve_integral(instances.pentagon(), "inf")
    sol = tmp_path / "sol.json"
    sol.write_text(json.dumps(T.summary()))
    svg = tmp_path / "p.svg"
    code, _ = run(capsys, "render", "--solution", str(sol), "--svg", str(svg), "--style", "norm")
    assert code == EXIT_OK
    assert "<line" in svg.read_text()


def test_verify_writes_outputs(capsys, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('suite = "mollifier"\nseed = 3\n')
    code, out = run(capsys, "--out", str(tmp_path), "verify", "--suite", "mollifier", "--config", str(cfg))
    assert code == EXIT_OK
    assert "PASS" in out.out
    summary = json.loads((tmp_path / "mollifier_summary.json").read_text())
    assert summary["passed"] and summary["config"]["seed"] == 3
    assert (tmp_path / "mollifier.csv").read_text().count("\n") > 1


def test_verify_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--out", str(d), "--seed", "5", "verify", "--suite", "norms_props"]) == EXIT_OK
    capsys.readouterr()
    assert (a / "norms_props.csv").read_text() == (b / "norms_props.csv").read_text()
    sa, sb = (json.loads((d / "norms_props_summary.json").read_text()) for d in (a, b))
    sa["config"].pop("out"), sb["config"].pop("out")
    assert sa == sb


@pytest.mark.parametrize("argv", [
    ["verify", "--suite", "nosuch"],
    ["verify", "--suite", "mollifier", "--stencil", "5"],
    ["solve", "--coeff", "integral", "--instance", "{not json"],
    ["frobnicate"],
])
def test_config_errors(capsys, argv, tmp_path):
    code, _ = run(capsys, "--out", str(tmp_path), *argv)
    assert code == EXIT_CONFIG


def test_bad_config_key(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"suite": "mollifier", "colour": "red"}))
    code, _ = run(capsys, "verify", "--suite", "mollifier", "--config", str(cfg))
    assert code == EXIT_CONFIG


def test_suite_config_validation():
    with pytest.raises(ValueError):
        SuiteConfig(suite="mollifier", plist=["0.5"]).validate()
    cfg = SuiteConfig(suite="theoremE", k=["2"], plist=["1.5", "inf"]).validate()
    assert cfg.k == [2] and cfg.plist == ["3/2", "inf"]


def test_failing_lift_exit_code(capsys, tmp_path, monkeypatch):
    import vecplateau.torusmaps as tm

    T = solve_integral(instances.steiner_triangle(), 2).current
    cur = tmp_path / "T.json"
    T.to_json(cur)
    monkeypatch.setattr(tm, "holder_factor", lambda k, p: 0.0)
    code, _ = run(capsys, "lift", "--current", str(cur), "--cuts", str(cur), "--eps", "0.05", "--p", "2")
    assert code == EXIT_FAIL
