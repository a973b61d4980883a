import json
import math

import pytest

from shrinkerlab.cli import main
from shrinkerlab.immersion import read_immersion


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def sqrt2_file(tmp_path):
    path = tmp_path / "c.imm"
    assert run("make", "circle", "--r", repr(math.sqrt(2.0)), "-n", 512, "-o", path) == 0
    return path


def test_audit_of_sqrt2_circle_passes(sqrt2_file, tmp_path):
    out = tmp_path / "a.json"
    assert run("audit", "--in", sqrt2_file, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["pass"] is True


def test_audit_of_random_torus_fails(tmp_path):
    path = tmp_path / "r.imm"
    assert run("make", "random", "-n", 32, "-o", path) == 0
    assert run("audit", "--in", path) == 1


def test_missing_and_malformed_inputs(tmp_path):
    assert run("audit", "--in", tmp_path / "missing.imm") == 2
    bad = tmp_path / "bad.imm"
    bad.write_text("m=1\ngrid=16\n")
    assert run("audit", "--in", bad) == 2


def test_bad_window_is_a_usage_error(tmp_path):
    assert run("make", "al", "--p", 1, "--q", 1, "-n", 256, "-o", tmp_path / "x.imm") == 2


def test_invalid_tolerance_is_a_usage_error(sqrt2_file):
    assert run("--tol-lag", -1, "audit", "--in", sqrt2_file) == 2


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_geometry_and_diameter_audit(sqrt2_file, tmp_path, capsys):
    assert run("geometry", "--in", sqrt2_file) == 0
    json.loads(capsys.readouterr().out)
    out = tmp_path / "d.json"
    assert run("diameter-audit", "--in", sqrt2_file, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["diam"] == pytest.approx(math.pi * math.sqrt(2.0), abs=1e-6)


def test_minimize_writes_result_and_history(tmp_path):
    src, dst, hist = tmp_path / "n.imm", tmp_path / "m.imm", tmp_path / "h.csv"
    assert run("make", "circle", "--r", 1.7, "--noise", 0.05, "-n", 128, "-o", src) == 0
    assert run("minimize", "--in", src, "--out", dst, "--history", hist) == 0
    F = read_immersion(dst)
    assert F.grid.sizes == (128,)
    assert hist.read_text().splitlines()[0] == "iter,F_lambda,residual_sup"


def test_spectrum_csv(sqrt2_file, tmp_path):
    csv = tmp_path / "s.csv"
    assert run("spectrum", "--in", sqrt2_file, "-k", 5, "--csv", csv, "--out", tmp_path / "s.json") == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "index,eigenvalue"
    assert len(lines) == 6
    assert float(lines[2].split(",")[1]) == pytest.approx(0.5, abs=1e-4)


def test_flow_writes_monitor(tmp_path):
    src = tmp_path / "c.imm"
    assert run("make", "circle", "--r", 1.0, "-n", 32, "-o", src) == 0
    out = tmp_path / "flow"
    assert run("flow", "--in", src, "--out-dir", out, "--sample-every", 200) == 0
    assert (out / "monitor.csv").read_text().startswith("t,maxA,typeI,rescaled_residual")
    assert (out / "states.csv").exists()
    assert list(out.glob("state_*.imm"))


def test_expander_audit_via_cli(tmp_path):
    path = tmp_path / "t.imm"
    assert run("make", "torus", "--radii", "1.1,0.8", "-n", 32, "-o", path) == 0
    out = tmp_path / "e.json"
    run("audit", "--in", path, "--expander-lambda", 1.0, "--out", out)
    doc = json.loads(out.read_text())
    text = json.dumps(doc)
    assert "expander-obstruction" in text


def test_theorem_suite_sphere_subset(tmp_path):
    out = tmp_path / "suite"
    code = run("theorem-suite", "--quick", "--background", "sphere:1", "--out-dir", out)
    doc = json.loads((out / "summary.json").read_text())
    rows = [r["row"] for r in doc["rows"]]
    assert rows and 6 not in rows and 5 not in rows
    assert code == (0 if doc["pass"] else 1)
    assert (out / "summary.md").exists()
