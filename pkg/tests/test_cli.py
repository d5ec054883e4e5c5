"""End-to-end behavior of the command-line interface.

Everything runs in-process through main() except one subprocess smoke
test of the module entry point. The suite subcommand is exercised by the
acceptance tests, where its byte-determinism contract is checked across
processes.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from urnlab.cli import main

SA_MODEL = {"kind": "sa", "d": 1, "drift": [[1.0]], "theta0": [0.0],
            "noise": [[1.0]]}

FRIEDMAN_MODEL = {"kind": "urn", "d": 2, "Y0": [1.0, 1.0],
                  "adding_rule": {"name": "deterministic",
                                  "matrix": [[0.0, 1.0], [1.0, 0.0]]}}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_analyze_friedman_report(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": FRIEDMAN_MODEL})
    out = tmp_path / "art"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "analyze.json").read_text())
    assert rep["regime"] == "standard"
    assert rep["lambda_sec"] == -1.0
    S = np.array(rep["sigma_tilde"], dtype=float)
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-12
    assert rep["provenance"]["tool"] == "urnlab"
    assert rep["provenance"]["tool_version"]
    assert len(rep["provenance"]["config_digest"]) == 64
    # csv side artifact: the covariance matrix, one row per dimension
    lines = (out / "covariance.csv").read_text().splitlines()
    assert len(lines) == 4 and all(len(l.split(",")) == 4 for l in lines)
    assert "analyze.json" in capsys.readouterr().out


def test_analyze_critical_chain_model(tmp_path):
    doc = {"model": {"kind": "sa", "d": 2,
                     "drift": [[0.5, -1.0], [0.0, 0.5]],
                     "theta0": [0.0, 0.0],
                     "noise": [[1.0, 0.0], [0.0, 0.0]]},
           "analysis": {"chain_basis": [[1.0, 0.0], [0.0, -1.0]]}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "art"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "analyze.json").read_text())
    assert rep["regime"] == "critical"
    assert np.allclose(rep["covariance"], [[0.0, 0.0], [0.0, 1.0 / 3.0]],
                       atol=1e-12)


def test_analyze_slow_regime_descriptor(tmp_path):
    doc = {"model": dict(SA_MODEL, drift=[[0.3]])}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "art"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "analyze.json").read_text())
    assert rep["regime"] == "slow"
    assert rep["covariance"] is None
    assert rep["slow_descriptor"]["rho"] == 0.3
    assert rep["as_rate_exponent"] == 0.3
    assert not (out / "covariance.csv").exists()


def test_simulate_deterministic_artifacts(tmp_path):
    doc = {"model": SA_MODEL,
           "run": {"n": 64, "replicates": 2, "checkpoints": [1, 32, 64]}}
    cfg = write_config(tmp_path, doc)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    for name in ["run.json", "trajectory-0.csv", "trajectory-1.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = (a / "trajectory-0.csv").read_text().splitlines()
    assert rows[0] == "n,theta_1" and len(rows) == 4
    assert main(["simulate", "--config", cfg, "--out", str(c),
                 "--seed", "7"]) == 0
    assert ((a / "trajectory-0.csv").read_bytes()
            != (c / "trajectory-0.csv").read_bytes())
    manifest = json.loads((a / "run.json").read_text())
    assert manifest["checkpoints"] == [1, 32, 64]
    assert manifest["files"] == ["trajectory-0.csv", "trajectory-1.csv"]
    assert len(manifest["trajectories"]) == 2


def test_simulate_format_selection(tmp_path):
    doc = {"model": SA_MODEL, "run": {"n": 8}}
    cfg = write_config(tmp_path, doc)
    j, c = tmp_path / "j", tmp_path / "c"
    assert main(["simulate", "--config", cfg, "--out", str(j),
                 "--format", "json"]) == 0
    assert not list(j.glob("*.csv"))
    manifest = json.loads((j / "run.json").read_text())
    assert manifest["files"] == []
    assert "trajectories" in manifest
    assert main(["simulate", "--config", cfg, "--out", str(c),
                 "--format", "csv"]) == 0
    assert (c / "trajectory-0.csv").exists()
    manifest = json.loads((c / "run.json").read_text())
    assert "trajectories" not in manifest


def test_seed_priority_chain(tmp_path, monkeypatch):
    plain = write_config(tmp_path, {"model": SA_MODEL, "run": {"n": 8}},
                         "plain.json")
    pinned = write_config(tmp_path,
                          {"model": SA_MODEL, "run": {"n": 8, "seed": 3}},
                          "pinned.json")
    out = tmp_path / "o"

    def run_seed(cfg, *extra):
        assert main(["simulate", "--config", cfg, "--out", str(out),
                     *extra]) == 0
        return json.loads((out / "run.json").read_text())["seed"]

    monkeypatch.setenv("URNLAB_SEED", "11")
    assert run_seed(plain) == 11          # env fills the gap
    assert run_seed(pinned) == 3          # file beats env
    assert run_seed(pinned, "--seed", "9") == 9  # flag beats file
    monkeypatch.delenv("URNLAB_SEED")
    assert run_seed(plain) == 0           # nothing set: default


def test_env_seed_must_be_integer(tmp_path, monkeypatch, capsys):
    cfg = write_config(tmp_path, {"model": SA_MODEL, "run": {"n": 8}})
    monkeypatch.setenv("URNLAB_SEED", "abc")
    assert main(["simulate", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 2
    assert "URNLAB_SEED" in capsys.readouterr().err


def test_urn_command_counts_draws(tmp_path):
    doc = {"model": FRIEDMAN_MODEL, "run": {"n": 20, "checkpoints": [5, 20]}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["urn", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "urn-0.csv").read_text().splitlines()
    assert rows[0] == "n,Y_1,Y_2,N_1,N_2"
    for row in rows[1:]:
        cells = row.split(",")
        n = int(cells[0])
        # one draw per step, one ball added per draw
        assert int(cells[3]) + int(cells[4]) == n
        assert float(cells[1]) + float(cells[2]) == 2.0 + n


def test_gauss_command_grid(tmp_path):
    doc = {"model": {"kind": "gauss", "d": 1, "H": [[1.0]],
                     "gamma": [[1.0]], "grid": [1.0, 4.0, 16.0]},
           "run": {"replicates": 2}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["gauss", "--config", cfg, "--out", str(out)]) == 0
    for r in range(2):
        rows = (out / f"gauss-{r}.csv").read_text().splitlines()
        assert rows[0] == "t,G_1" and len(rows) == 4
        assert [float(row.split(",")[0]) for row in rows[1:]] == [1, 4, 16]
    # value at the origin is the configured start, zero by default
    assert rows[1] == "1,0"


def test_ode_command_flow(tmp_path):
    doc = {"model": {"kind": "ode", "d": 2, "H": [[0.0, 1.0], [1.0, 0.0]],
                     "theta0": [0.9, 0.3]},
           "run": {"n": 40}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["ode", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["identity_residual"] < 1e-6
    assert np.allclose(manifest["final_theta"], [0.5, 0.5], atol=1e-6)
    rows = (out / "flow.csv").read_text().splitlines()
    assert rows[0] == "s,f,theta_1,theta_2"
    assert len(rows) == manifest["steps"] + 1


def test_verify_standard_sa_passes(tmp_path):
    doc = {"model": SA_MODEL, "run": {"n": 2000, "replicates": 400}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["predicted_cov"] == [[1.0]]
    assert rep["verdict"]["passed"] is True
    assert rep["rel_frobenius"] < 0.15
    samples = (out / "samples.csv").read_text().splitlines()
    assert len(samples) == 400


def test_verify_urn_against_lyapunov(tmp_path):
    doc = {"model": FRIEDMAN_MODEL, "run": {"n": 5000, "replicates": 400}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert np.array(rep["predicted_cov"]).shape == (4, 4)
    assert rep["verdict"]["passed"] is True


def test_verify_failure_exits_one(tmp_path, capsys):
    doc = {"model": SA_MODEL, "run": {"n": 2000, "replicates": 400},
           "analysis": {"tolerances": {"rel_frobenius": 1e-6}}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 1
    rep = json.loads((out / "verify.json").read_text())
    assert rep["verdict"]["passed"] is False
    assert "verify: failed" in capsys.readouterr().err


def test_verify_slow_regime_is_config_error(tmp_path, capsys):
    doc = {"model": dict(SA_MODEL, drift=[[0.3]]),
           "run": {"n": 100, "replicates": 10}}
    cfg = write_config(tmp_path, doc)
    assert main(["verify", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 2
    assert "slow regime" in capsys.readouterr().err


def test_config_error_exit_codes(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["analyze", "--config", missing,
                 "--out", str(tmp_path / "o")]) == 2

    bad = tmp_path / "bad.json"
    bad.write_text('{"modle": {}}')
    assert main(["analyze", "--config", str(bad),
                 "--out", str(tmp_path / "o")]) == 2
    assert "/modle" in capsys.readouterr().err

    urn_cfg = write_config(tmp_path, {"model": FRIEDMAN_MODEL}, "u.json")
    assert main(["simulate", "--config", urn_cfg,
                 "--out", str(tmp_path / "o")]) == 2  # kind mismatch
    assert main(["urn", "--config", urn_cfg,
                 "--out", str(tmp_path / "o")]) == 2  # missing /run/n
    assert 'missing required key "/run/n"' in capsys.readouterr().err


def test_unknown_command_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"model": FRIEDMAN_MODEL})
    out = tmp_path / "art"
    proc = subprocess.run(
        [sys.executable, "-m", "urnlab", "analyze", "--config", cfg,
         "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "analyze.json" in proc.stdout
    assert json.loads((out / "analyze.json").read_text())["regime"] == "standard"
