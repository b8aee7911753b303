import json

import pytest
import yaml

from wienermonge.cli import main
from wienermonge.config import build_config
from wienermonge.errors import InvalidInputError


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, out, summary


def test_solve_square(tmp_path, capsys):
    code, out, s = run(tmp_path, "solve", "--no-plots")
    assert code == 0 and s["status"] == "pass"
    assert s["metrics"]["cost"] == pytest.approx(1.0, abs=1e-12)
    head = (out / "plan.csv").read_text().splitlines()[0]
    assert head.startswith("# config_hash=") and f"seed={s['seed']}" in head
    assert set(s["artifacts"]) >= {"plan.csv", "plan.json", "mu.csv", "nu.csv"}


def test_ladder_m1(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"params": {"dims": [1, 2, 4], "n": 3000, "subsample": 48}}))
    code, _, s = run(tmp_path, "ladder", "--config", str(cfg))
    assert code == 0
    m = s["metrics"]["seed0"]
    assert m["saturated"] and m["monotone"] and m["m"] == 1


def test_identity_evolution(tmp_path):
    cfg = tmp_path / "c.yaml"
    pairs = [{"name": "id", "rho1": {"kind": "constant"}, "rho2": {"kind": "constant"}}]
    cfg.write_text(yaml.safe_dump({"params": {"pairs": pairs, "n_sets": 5, "n_cells": 1000, "ts": [0.5]}}))
    code, out, s = run(tmp_path, "verify-evolution", "--config", str(cfg))
    assert code == 0
    assert s["metrics"]["id"]["c_hat"] == pytest.approx(1.0, abs=1e-9)
    assert (out / "ratios.svg").exists()


def test_bad_input_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"params": {"instance": {"kind": "nope"}}}))
    code, _, _ = run(tmp_path, "solve", "--config", str(cfg))
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "invalid-input"
    assert main(["solve", "--tol-override", "gap=-1", "--out", str(tmp_path / "x")]) == 3
    assert main(["solve", "--tol-override", "bogus=1", "--out", str(tmp_path / "x")]) == 3


def test_tolerance_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.yaml"
    pairs = [{"name": "ind", "rho1": {"kind": "interval", "a": -1, "b": 1},
              "rho2": {"kind": "interval", "a": 0, "b": 2}}]
    cfg.write_text(yaml.safe_dump({"params": {"pairs": pairs, "n_sets": 4, "n_cells": 1000, "ts": [0.5],
                                              "reverse": False}}))
    # an absurdly fine Richardson tolerance makes the quadrature check fail
    code = main(["verify-evolution", "--config", str(cfg), "--tol-override", "richardson=1e-300",
                 "--out", str(tmp_path / "o"), "--no-plots"])
    assert code == 2


def test_tol_override_recorded(tmp_path):
    code, _, s = run(tmp_path, "solve", "--tol-override", "gap=1e-6", "--no-plots")
    assert code == 0 and s["config"]["tolerances"]["gap"] == 1e-6
    assert build_config("solve", overrides=["gap=1e-6"]).hash == s["config_hash"]
    with pytest.raises(InvalidInputError):
        build_config("solve", {"command": "ladder"})


def test_replay_roundtrip_and_tamper(tmp_path, capsys):
    code, out, _ = run(tmp_path, "glue")
    assert code == 0
    assert main(["replay", str(out / "summary.json")]) == 0
    plan = out / "map.csv"
    lines = plan.read_text().splitlines(keepends=True)
    k = 3
    last = lines[k].rstrip("\n")
    lines[k] = last[:-1] + ("0" if last[-1] != "0" else "1") + "\n"
    plan.write_text("".join(lines))
    capsys.readouterr()
    assert main(["replay", str(out / "summary.json")]) == 2
    msg = capsys.readouterr().out
    assert f"map.csv: first difference at line {k + 1}" in msg


def test_replay_missing_summary(tmp_path):
    assert main(["replay", str(tmp_path / "none.json")]) == 3


def test_seed_changes_output_dir_name(tmp_path, monkeypatch):
    monkeypatch.setenv("WIENERMONGE_OUT", str(tmp_path))
    assert main(["glue", "--seed", "4", "--no-plots"]) == 0
    dirs = [p.name for p in tmp_path.iterdir()]
    assert len(dirs) == 1 and dirs[0].startswith("glue-") and dirs[0].endswith("-s4")
