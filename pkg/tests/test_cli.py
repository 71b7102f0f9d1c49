import csv
import json
import subprocess
import sys

import pytest

from tasep_lab.cli import ConfigError, load_config, main, run, validate_config

SMALL = {
    "current": {"lambda": 0.3, "burn_in": 200, "horizon": 2000, "replicas": 4},
    "survival": {"lambda": 0.25, "x_far": 30, "replicas": 20},
    "first-order": {"lambda": 0.25, "eps_grid": [0.01, 0.02, 0.04], "burn_in": 100, "horizon": 500, "replicas": 3},
    "sandwich": {"lambda": 0.25, "epsilon": 0.05, "horizon": 200, "replicas": 3},
    "profile": {"lambda": 0.3, "burn_in": 100, "horizon": 500, "replicas": 3, "sites": [3, 10]},
    "oracle-check": {"L": [3], "lambda": [0.3], "burn_in": 100, "horizon": 5000, "replicas": 10},
    "projection-check": {"lambda": 0.25, "epsilon": 0.05, "horizon": 200, "replicas": 3},
}


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_each_subcommand(sub, tmp_path, capsys):
    assert run(sub, SMALL[sub], seed=1, threads=2, out=tmp_path) == 0
    rows = read_rows(tmp_path / f"{sub}.csv")
    assert rows and set(rows[0]) >= {"estimate", "std_error", "replicas", "seed"}
    man = json.loads((tmp_path / f"{sub}.manifest.json").read_text())
    assert man["seed"] == 1 and man["replica_seeds"][0] == 1
    assert man["config"]["subcommand"] == sub
    assert man["wall_time_seconds"] >= 0 and man["build"]


def test_current_row(tmp_path):
    run("current", {"lambda": 0.3, "burn_in": 500, "horizon": 5000, "replicas": 10}, 2, 1, tmp_path)
    (row,) = read_rows(tmp_path / "current.csv")
    assert row["quantity"] == "entry_current"
    assert abs(float(row["estimate"]) - 0.21) < 3 * float(row["std_error"])


def test_oracle_check_prints_pass(tmp_path, capsys):
    run("oracle-check", SMALL["oracle-check"], 0, 1, tmp_path)
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and out[0].startswith("PASS L=3")


def test_missing_field_exits_2(tmp_path, capsys):
    cfg = dict(SMALL["current"])
    del cfg["horizon"]
    assert run("current", cfg, out=tmp_path) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "horizon"
    assert not (tmp_path / "current.csv").exists()


@pytest.mark.parametrize(
    "sub,patch,field",
    [
        ("current", {"lambda": 0.5}, "lambda"),
        ("current", {"replicas": 1}, "replicas"),
        ("current", {"bogus": 1}, "bogus"),
        ("current", {"epsilon": 0.3}, "epsilon"),
        ("first-order", {"eps_grid": [0.0, 0.01, 0.02]}, "eps_grid"),
        ("first-order", {"eps_grid": [0.01, 0.02]}, "eps_grid"),
        ("profile", {"sites": [5, 2]}, "sites"),
        ("profile", {"sites": [3, 500]}, "sites"),
        ("survival", {"x_far": 3}, "x_far"),
        ("oracle-check", {"L": [13]}, "L"),
        ("current", {"seed": -1}, "seed"),
    ],
)
def test_invalid_fields(sub, patch, field):
    with pytest.raises(ConfigError) as exc:
        validate_config(sub, {**SMALL[sub], **patch})
    assert exc.value.field == field


def test_manifest_round_trip(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("current", SMALL["current"], seed=9, threads=1, out=a) == 0
    assert main(["current", "--config", str(a / "current.manifest.json"), "--threads", "3", "--out", str(b)]) == 0
    assert (a / "current.csv").read_bytes() == (b / "current.csv").read_bytes()
    assert (a / "current.config.json").read_bytes() == (b / "current.config.json").read_bytes()
    assert load_config(a / "current.manifest.json")["seed"] == 9


def test_thread_invariance(tmp_path):
    cfg = SMALL["first-order"]
    run("first-order", cfg, 3, 1, tmp_path / "t1")
    run("first-order", cfg, 3, 8, tmp_path / "t8")
    assert (tmp_path / "t1" / "first-order.csv").read_bytes() == (tmp_path / "t8" / "first-order.csv").read_bytes()


def test_env_threads_and_warning(tmp_path, monkeypatch, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"lambda": 0.2, "x_far": 200, "t_max": 10, "replicas": 10}))
    monkeypatch.setenv("TASEP_LAB_THREADS", "2")
    assert main(["survival", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "survival.manifest.json").read_text())
    assert man["threads"] == 2
    assert man["warning"] and "censored" in man["warning"]
    monkeypatch.setenv("TASEP_LAB_THREADS", "x")
    assert main(["survival", "--config", str(cfg_path), "--out", str(tmp_path)]) == 2


def test_console_script(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda": 0.1}))
    proc = subprocess.run(
        [sys.executable, "-m", "tasep_lab.cli", "current", "--config", str(cfg), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["field"] == "burn_in"
