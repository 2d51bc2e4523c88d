from __future__ import annotations

import csv
import json
import os

import pytest

from branchctl.cli import EXIT_CAP, EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main, run, validate_config, ConfigError


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_simulate_yule_writes_moments(tmp_path):
    out = tmp_path / "runs"
    code = main(["simulate", "--preset", "yule", "--T", "1", "--dt", "1e-2", "--seed", "42",
                 "--replicates", "500", "--out", str(out)])
    assert code == EXIT_OK
    rows = list(csv.reader(open(out / "moments.csv")))
    assert len(rows) > 1
    cfg = read_json(out / "config.json")
    assert cfg["seed"] == 42 and cfg["replicates"] == 500 and cfg["sim"]["dt"] == 1e-2
    man = read_json(out / "manifest.json")
    assert man["status"] == "pass" and "moments.csv" in man["files"]


def test_simulate_single_replicate_exports_trajectory(tmp_path):
    out = tmp_path / "one"
    assert main(["simulate", "--preset", "yule", "--dt", "1e-2", "--seed", "1", "--replicates", "1",
                 "--out", str(out)]) == EXIT_OK
    assert os.path.exists(out / "trajectory.jsonl") and os.path.exists(out / "frames.csv")


def test_manifest_is_reproducible(tmp_path):
    args = ["simulate", "--preset", "logistic-mf", "--dt", "1e-2", "--seed", "5", "--replicates", "300"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    ma, mb = read_json(tmp_path / "a" / "manifest.json"), read_json(tmp_path / "b" / "manifest.json")
    assert ma["files"] == mb["files"] and ma == mb


def test_estimate_lq_end_to_end(tmp_path):
    out = tmp_path / "cost.json"
    code = main(["estimate", "--preset", "lq", "--policy", "riccati", "--replicates", "2000", "--dt", "5e-3",
                 "--seed", "7", "--out", str(out)])
    assert code == EXIT_OK
    cost = read_json(out)
    assert cost["replicates"] == 2000
    assert os.path.exists(tmp_path / "cost.residual.csv")
    assert os.path.exists(tmp_path / "cost.manifest.json")


def test_riccati_from_spec_file(tmp_path):
    spec = {"B": [[0.0]], "Bbar": [[1.0]], "sigma": 1.0, "gamma": 0.2, "p": [0.0, 0.0, 1.0], "C": [[0.0]],
            "c": 0.0, "Cbar": [[0.5]], "H": [[1.0]], "h": 0.0, "T": 1.0}
    path = tmp_path / "lq.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "ric.csv"
    assert main(["riccati", "--spec", str(path), "--steps", "200", "--out", str(out)]) == EXIT_OK
    rows = open(out).read().strip().split("\n")
    assert rows[0] == "t,Q11,p,pbar" and len(rows) == 202


def test_kinetic_and_hjb(tmp_path):
    assert main(["kinetic", "--terminal", "quad", "--xlo", "-4", "--xhi", "4", "--nx", "401", "--T", "1",
                 "--out", str(tmp_path / "h.csv")]) == EXIT_OK
    assert os.path.exists(tmp_path / "h.csv")
    # too coarse for the 1e-3 cross-check: the run reports the failure
    assert main(["kinetic", "--nx", "101", "--out", str(tmp_path / "coarse")]) == EXIT_CHECK
    out = tmp_path / "vg"
    assert main(["hjb", "--preset", "pure-death", "--nmax", "2", "--xlo", "-2", "--xhi", "2", "--nx", "11",
                 "--na", "1", "--amin", "0", "--amax", "0", "--out", str(out)]) == EXIT_OK
    assert os.path.exists(out / "vg.npz") and os.path.exists(out / "vg.json")
    man = read_json(out / "manifest.json")
    assert "vg.npz" in man["files"]


def test_grid_policy_escape_is_a_failure(tmp_path):
    vg = tmp_path / "vg"
    assert main(["hjb", "--preset", "yule", "--nmax", "1", "--xlo", "-2", "--xhi", "2", "--nx", "11",
                 "--na", "1", "--amin", "0", "--amax", "0", "--out", str(vg)]) == EXIT_OK
    out = tmp_path / "est"
    code = main(["estimate", "--preset", "yule", "--policy", str(vg / "vg"), "--replicates", "50",
                 "--dt", "1e-2", "--seed", "1", "--out", str(out)])
    assert code == EXIT_CHECK
    assert read_json(out / "failure.json")["status"] == "error"


def test_estimate_with_grid_policy(tmp_path):
    # the symmetry probe must stay within the grid's population cap
    vg = tmp_path / "vg"
    assert main(["hjb", "--preset", "pure-death", "--nmax", "2", "--xlo", "-2", "--xhi", "2", "--nx", "11",
                 "--na", "1", "--amin", "0", "--amax", "0", "--out", str(vg)]) == EXIT_OK
    out = tmp_path / "est"
    assert main(["estimate", "--preset", "pure-death", "--policy", str(vg / "vg"), "--replicates", "200",
                 "--dt", "1e-2", "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert read_json(out / "symmetry.json")["max_discrepancy"] == 0.0


def test_verify_single_suite(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "hjb", "--out", str(out)]) == EXIT_OK
    res = read_json(out / "verify_hjb.json")
    assert res and all(c["passed"] for c in res["checks"])
    assert "timing.json" not in read_json(out / "manifest.json")["files"]


def test_validate_assumptions(tmp_path):
    assert main(["validate-assumptions", "--preset", "logistic-mf", "--probes", "50",
                 "--out", str(tmp_path / "va")]) == EXIT_OK


def test_config_errors(tmp_path):
    assert run({"pipeline": "simulate", "seed": 1, "replicats": 10, "out": str(tmp_path / "x")}) == EXIT_CONFIG
    assert run({"pipeline": "simulate", "seed": 1, "sim": {"dtt": 1}, "out": str(tmp_path / "x")}) == EXIT_CONFIG
    assert run({"pipeline": "simulate", "out": str(tmp_path / "x")}) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["simulate", "--bogus-flag"]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        validate_config({"pipeline": "nope", "seed": 1})


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"pipeline": "simulate", "seed": 3, "preset": "pure-death", "replicates": 200,
                               "sim": {"dt": 0.01}}))
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--seed", "9", "--out", str(out)]) == EXIT_OK
    echoed = read_json(out / "config.json")
    assert echoed["seed"] == 9 and echoed["preset"] == "pure-death" and echoed["replicates"] == 200


def test_cap_exceeded_exit_code(tmp_path):
    code = run({"pipeline": "estimate", "seed": 1, "preset": "yule", "preset_params": {"gamma": 5.0},
                "replicates": 50, "sim": {"T": 3.0, "dt": 0.01, "max_population": 4},
                "out": str(tmp_path / "cap")})
    assert code == EXIT_CAP
    assert read_json(tmp_path / "cap" / "failure.json")["status"] == "cap-exceeded"
