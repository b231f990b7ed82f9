import json

import pytest

from qmrigid.cli import main


def test_gen_writes_files(tmp_path, capsys):
    rc = main(["gen", "--kind", "koch_curve", "--param", "level=1", "--seed", "0",
               "--out", str(tmp_path)])
    assert rc == 0
    assert "gen: PASSED" in capsys.readouterr().out
    assert (tmp_path / "gen.points.csv").read_text().splitlines()[0] == "id,x1,x2"
    assert (tmp_path / "gen.dist.csv").read_text().splitlines()[0] == "5"
    rep = json.loads((tmp_path / "gen.json").read_text())
    assert rep["schema"] == 1 and rep["n"] == 5


def test_seed_required_on_stochastic_commands(capsys):
    for cmd in (["gen", "--kind", "psl2z"], ["cube-check"], ["elevator"], ["desnowflake"]):
        with pytest.raises(SystemExit) as e:
            main(cmd)
        assert e.value.code == 2
    assert "--seed" in capsys.readouterr().err


def test_invariant_failure_sets_exit_code(capsys):
    assert main(["entropy", "--group", "psl2z", "--R", "6", "--window", "3", "6",
                 "--expect-slope", "1", "--tol", "0.5"]) == 0
    assert main(["entropy", "--group", "psl2z", "--R", "6", "--window", "3", "6",
                 "--max-slope", "0.01"]) == 1
    assert "FAIL slope_below_max" in capsys.readouterr().out


def test_hyperbolicity_of_a_file(tmp_path):
    assert main(["gen", "--kind", "tree_metric", "--param", "n=40", "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    assert main(["hyperbolicity", "--dist", str(tmp_path / "gen.dist.csv"), "--seed", "0",
                 "--max-delta", "0", "--out", str(tmp_path / "h")]) == 0
    rep = json.loads((tmp_path / "h" / "hyperbolicity.json").read_text())
    assert rep["delta"] == 0.0


def test_usage_errors(capsys, tmp_path):
    assert main(["desnowflake", "--seed", "1"]) == 2
    assert "--kind" in capsys.readouterr().err
    assert main(["cube-check", "--seed", "1", "--family", "2x3"]) == 2
    assert main(["plot-data", str(tmp_path / "missing.json"), "--view", "entropy"]) == 2


def test_small_commands_pass(tmp_path, capsys):
    assert main(["cube-check", "--seed", "4", "--family", "2:10:200", "--grid", "2", "4"]) == 0
    assert main(["desnowflake", "--seed", "1", "--kind", "circle_snowflake", "--param", "N=400",
                 "--pairs", "80", "--max-ratio", "8"]) == 0
    assert main(["visual", "--depth", "3", "--eps-grid", "0.2", "1.2", "5"]) == 0
    assert main(["orbit", "--R", "5", "--lattice-check", "--out", str(tmp_path)]) == 0
    assert main(["plot-data", str(tmp_path / "orbit.json"), "--view", "orbit",
                 "--out", str(tmp_path / "o.csv")]) == 0
    assert (tmp_path / "o.csv").read_text().startswith("R,N\n")


def test_campaign_command(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "pipeline": [
        {"name": "k", "op": "gen", "params": {"kind": "koch_curve", "params": {"level": 2}}}]}))
    assert main(["campaign", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert "campaign: PASS" in capsys.readouterr().out
    cfg.write_text(json.dumps({"pipeline": []}))
    assert main(["campaign", str(cfg)]) == 2
