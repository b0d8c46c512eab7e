"""Command-line front end: config validation, exit codes, emitted documents."""

import json

import pytest

from nls_norm import read_field
from nls_norm.cli import (
    EXIT_CONFIG,
    EXIT_INADMISSIBLE,
    EXIT_OK,
    build_spec,
    main,
    spec_digest,
)

BASE = """
[problem]
N = 3
rho = 1.0

[grid]
R = 3.0
n = 1000

[nonlinearity]
kind = "powers"
terms = [[1.0, 4.0]]
"""


def write_cfg(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_dry_run_plan(tmp_path, capsys):
    cfg = write_cfg(tmp_path, BASE)
    assert main(["solve", "--config", cfg, "--dry-run"]) == EXIT_OK
    plan = json.loads(capsys.readouterr().out)
    assert plan["command"] == "solve"
    assert plan["grid"] == {"R": 3.0, "n": 1000}
    assert len(plan["spec_digest"]) == 64


def test_check_exit_codes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, BASE)
    assert main(["check", "--config", cfg]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["branch"] == "theorem-b"
    # mass-critical growth fails the required assumptions
    bad = BASE.replace("[[1.0, 4.0]]", "[[1.0, 3.0]]")
    cfg2 = write_cfg(tmp_path, bad, "bad.toml")
    assert main(["check", "--config", cfg2]) == EXIT_INADMISSIBLE


def test_solve_emits_profile(tmp_path, capsys):
    out = tmp_path / "state.json"
    cfg = write_cfg(tmp_path, BASE + """
[output]
emit_profile = true
profile_format = "binary"
""")
    assert main(["solve", "--config", cfg, "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["converged"]
    assert doc["lambda"] == pytest.approx(357.09, rel=1e-2)
    assert set(doc["verify"]) == {"original", "refined"}
    u = read_field(doc["profile_path"])
    assert u.grid.N == 3
    assert float(max(abs(u.values))) > 0.0


def test_sweep_csv_output(tmp_path):
    out = tmp_path / "map.csv"
    cfg = write_cfg(tmp_path, BASE + """
[sweep]
rho_list = [0.5, 1.0]

[output]
format = "csv"
""")
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "rho,c,lambda,converged,grad_norm"
    assert len(lines) == 4
    summary = json.loads(lines[-1].removeprefix("# summary "))
    assert summary["check_monotone"] == "strict"
    assert summary["rho_to_zero"]["verdict"] == "insufficient-span"


def test_gn_csv(tmp_path, capsys):
    cfg = write_cfg(tmp_path, """
[problem]
N = 3
rho = 1.0

[nonlinearity]
kind = "powers"
terms = [[1.0, 4.0]]

[gn]
p = 4.0

[output]
format = "csv"
""")
    assert main(["gn", "--config", cfg]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "N,p,delta,C"
    n, p, delta, c = lines[1].split(",")
    assert float(c) == pytest.approx(0.449257, rel=1e-5)
    assert float(delta) == pytest.approx(0.75)


def test_config_errors(tmp_path, capsys):
    bad_key = write_cfg(tmp_path, BASE + "\n[solver]\nturbo = true\n", "k.toml")
    assert main(["solve", "--config", bad_key, "--dry-run"]) == EXIT_CONFIG
    assert "solver.turbo" in capsys.readouterr().err
    bad_toml = write_cfg(tmp_path, "[problem\nN = 3", "t.toml")
    assert main(["check", "--config", bad_toml]) == EXIT_CONFIG
    no_nl = write_cfg(tmp_path, "[problem]\nN = 3\nrho = 1.0\n", "n.toml")
    assert main(["check", "--config", no_nl]) == EXIT_CONFIG
    assert main(["check", "--config", str(tmp_path / "absent.toml")]) == EXIT_CONFIG
    low_n = write_cfg(tmp_path, BASE.replace("N = 3", "N = 2"), "d.toml")
    assert main(["check", "--config", low_n]) == EXIT_CONFIG


def test_digest_is_canonical():
    a = build_spec({"kind": "powers", "terms": [[1.0, 4.0]]}, 3)
    b = build_spec({"kind": "powers", "terms": [[1, 4]]}, 3)
    c = build_spec({"kind": "powers", "terms": [[0.5, 4.0]]}, 3)
    assert spec_digest(a) == spec_digest(b)
    assert spec_digest(a) != spec_digest(c)
