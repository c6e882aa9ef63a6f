import json

import pytest

from react_xrl.cli import OUT_ENV_VAR, main
from react_xrl.env import load_env
from react_xrl.evolve import RunLog


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def policy_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert run_cli("train", "--env", "flatgrid11", "--preset", "grid-undertrained", "--out", out) == 0
    return out / "policy.json"


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_train_full_budget_prints_bfs_return(tmp_path, capsys):
    assert run_cli("train", "--preset", "grid-full", "--out", tmp_path) == 0
    env = load_env("flatgrid11")
    expected = 50 - env.distances_to_goal()[env.training_start]
    assert f"greedy return from training start: {expected} " in capsys.readouterr().out


def test_train_same_seed_same_file(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("train", "--episodes", "40", "--seed", "3", "--out", tmp_path / sub) == 0
    assert (tmp_path / "a/policy.json").read_bytes() == (tmp_path / "b/policy.json").read_bytes()


def test_train_zero_episodes_writes_uniform_policy(tmp_path):
    assert run_cli("train", "--episodes", "0", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "policy.json").read_text())
    assert doc["q"] == []


def test_train_bad_env(tmp_path, capsys):
    assert run_cli("train", "--env", "nowhere.json", "--out", tmp_path) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ") and "\n" not in err


def test_optimize_training_mode_prints_zero(policy_file, tmp_path, capsys):
    assert run_cli("optimize", "--policy", policy_file, "--modes", "training", "--seeds", 0, 1, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "training: fidelity IQM 0.000 ± 0.000" in out


def test_optimize_unknown_mode(policy_file, tmp_path, capsys):
    assert run_cli("optimize", "--policy", policy_file, "--modes", "curiosity", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "joint" in err and "training" in err


def test_optimize_missing_policy(tmp_path, capsys):
    assert run_cli("optimize", "--policy", tmp_path / "missing.json", "--out", tmp_path) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_optimize_config_file_and_repeatability(policy_file, tmp_path):
    cfg = {
        "env": "flatgrid11",
        "policy": str(policy_file),
        "modes": ["joint", "random"],
        "seeds": [0, 1],
        "evolve": {"generations": 3, "bits_per_dim": 6},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert run_cli("optimize", "--config", path, "--out", tmp_path / "a") == 0
    assert run_cli("optimize", "--config", path, "--out", tmp_path / "b") == 0
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    assert a == b
    assert "joint/seed_1/runlog.jsonl" in a and "random/seed_0/heatmap.pgm" in a
    log = RunLog.load(tmp_path / "a/joint/seed_0/runlog.jsonl")
    assert log.generations == 3


def test_flags_override_config(policy_file, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"policy": str(policy_file), "evolve": {"generations": 5, "bits_per_dim": 6}}))
    assert run_cli("optimize", "--config", path, "-g", 1, "--out", tmp_path / "o") == 0
    assert RunLog.load(tmp_path / "o/joint/seed_0/runlog.jsonl").generations == 1


def test_output_root_from_environment(policy_file, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV_VAR, str(tmp_path / "envroot"))
    assert run_cli("optimize", "--policy", policy_file, "--modes", "training") == 0
    assert (tmp_path / "envroot/training/seed_0/summary.csv").exists()


def test_bad_config_reports_location(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{"env": "flatgrid11",\n  "seeds": [0,, 1]}')
    assert run_cli("optimize", "--config", path) == 2
    assert f"{path}:2:" in capsys.readouterr().err


def test_encoding_study(tmp_path, capsys):
    assert run_cli("encoding-study", "--bits", 4, 5, 6, "--out", tmp_path) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("m=4: per-dimension max/min 2.000") and lines[0].endswith("[WARN]")
    assert "1.333" in lines[1] and lines[1].endswith("[WARN]")
    assert "1.143" in lines[2] and lines[2].endswith("[ok]")
    rows = (tmp_path / "encoding_study/skew.csv").read_text().splitlines()
    assert rows[0] == "bits,per_dim_ratio,joint_ratio,warn" and len(rows) == 4
    assert (tmp_path / "encoding_study/occupancy_m6.pgm").exists()


def test_sweep_survival_series(policy_file, tmp_path):
    grid = json.dumps({"p": [10, 25, 50], "g": [2]})
    assert run_cli("sweep", "--policy", policy_file, "--grid", grid, "-m", 6, "--out", tmp_path) == 0
    rows = (tmp_path / "sweep/sweep.csv").read_text().splitlines()
    assert rows[0].startswith("point,population_size,generations,fidelity_iqm")
    assert len(rows) == 4
    survival = (tmp_path / "sweep/survival.csv").read_text().splitlines()
    assert {r.split(",")[0] for r in survival[1:]} == {"0", "1", "2"}


def test_sweep_single_point_matches_optimize(policy_file, tmp_path):
    assert run_cli("sweep", "--policy", policy_file, "--grid", '{"g": [2]}', "-m", 6, "--out", tmp_path) == 0
    assert run_cli("optimize", "--policy", policy_file, "-g", 2, "-m", 6, "--out", tmp_path / "opt") == 0
    sweep_run = (tmp_path / "sweep/point_0/joint/seed_0/runlog.jsonl").read_bytes()
    assert sweep_run == (tmp_path / "opt/joint/seed_0/runlog.jsonl").read_bytes()


def test_sweep_cap(policy_file, tmp_path, capsys):
    grid = json.dumps({"p": [10, 12, 14], "g": [1, 2, 3]})
    assert run_cli("sweep", "--policy", policy_file, "--grid", grid, "--cap", 4, "--out", tmp_path) == 2
    assert "cap" in capsys.readouterr().err


def test_report_regenerates_identically(policy_file, tmp_path):
    assert run_cli("optimize", "--policy", policy_file, "-g", 2, "-m", 6, "--out", tmp_path) == 0
    run_dir = tmp_path / "joint/seed_0"
    before = snapshot(run_dir)
    assert run_cli("report", run_dir) == 0
    assert snapshot(run_dir) == before


def test_report_corrupt_and_old_logs(policy_file, tmp_path, capsys):
    assert run_cli("optimize", "--policy", policy_file, "-g", 1, "-m", 6, "--out", tmp_path) == 0
    log = tmp_path / "joint/seed_0/runlog.jsonl"
    text = log.read_text()
    lines = text.splitlines(keepends=True)
    log.write_text(lines[0] + lines[1][:40] + "\n" + "".join(lines[2:]))
    assert run_cli("report", log) == 2
    assert "runlog.jsonl:2:" in capsys.readouterr().err
    log.write_text(text.replace('"version":1', '"version":0', 1))
    assert run_cli("report", log) == 2
    assert "version" in capsys.readouterr().err
    assert run_cli("report", tmp_path / "nothing") == 2
