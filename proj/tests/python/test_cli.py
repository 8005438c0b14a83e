import csv
import json
import os
import subprocess

import pytest

CLI = os.environ.get("CHAINBELL_CLI")
pytestmark = pytest.mark.skipif(not CLI, reason="CHAINBELL_CLI not set")


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([CLI, *args], capture_output=True, text=True, env=full_env)


def test_bound_inline(tmp_path):
    res = run("bound", "--state", "werner:0.8", "--n", "3", "--out-dir", str(tmp_path))
    assert res.returncode == 0, res.stderr
    rows = list(csv.DictReader(open(tmp_path / "bound.csv")))
    assert len(rows) == 1
    assert float(rows[0]["theorem1_bound"]) == pytest.approx(0.8 * 3 * 3**0.5, abs=1e-9)


def test_config_file_and_cache_env(tmp_path):
    cfg = tmp_path / "fig2.json"
    cfg.write_text(json.dumps({"experiment": "fig2", "p_grid": [0.95, 1.0], "modes": ["violation"]}))
    cache = tmp_path / "cache"
    out = tmp_path / "out"
    res = run("fig2", "--config", str(cfg), "--level", "q1", "--out-dir", str(out),
              env={"CHAINBELL_CACHE_DIR": str(cache)})
    assert res.returncode == 0, res.stderr
    assert (out / "fig2.csv").exists() and (out / "fig2.svg").exists()
    assert len(list(cache.iterdir())) == 1
    again = run("fig2", "--config", str(cfg), "--level", "q1", "--out-dir", str(out),
                env={"CHAINBELL_CACHE_DIR": str(cache)})
    assert again.returncode == 0
    assert "(cached)" in again.stdout


def test_unknown_config_key_exits_1(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"experiment": "fig2", "colour": "red"}))
    res = run("fig2", "--config", str(cfg), "--out-dir", str(tmp_path))
    assert res.returncode == 1
    assert "colour" in res.stderr


def test_config_for_other_subcommand_exits_1(tmp_path):
    cfg = tmp_path / "fig1.json"
    cfg.write_text(json.dumps({"experiment": "fig1"}))
    assert run("fig2", "--config", str(cfg), "--out-dir", str(tmp_path)).returncode == 1


def test_bad_flags_exit_1(tmp_path):
    assert run("fig2", "--level", "q9", "--out-dir", str(tmp_path)).returncode == 1
    assert run("fig2", "--p-grid", "0.9:0.8:3", "--out-dir", str(tmp_path)).returncode == 1
    assert run("bogus").returncode == 1
    assert run().returncode == 1


def test_failed_row_exits_2(tmp_path):
    res = run("tightness", "--state", "mixed", "--out-dir", str(tmp_path), "--no-cache")
    assert res.returncode == 2
    rows = list(csv.DictReader(open(tmp_path / "tightness.csv")))
    assert rows[0]["status"] == "DegenerateCorrelation"


def test_seed_changes_hash(tmp_path):
    a = run("fig1", "--seed", "1", "--nu-grid", "0.5,0.9", "--restarts", "2", "--out-dir", str(tmp_path / "a"))
    b = run("fig1", "--seed", "2", "--nu-grid", "0.5,0.9", "--restarts", "2", "--out-dir", str(tmp_path / "b"))
    assert a.returncode == 0 and b.returncode == 0
    ha = list(csv.DictReader(open(tmp_path / "a" / "fig1.csv")))[0]["config_hash"]
    hb = list(csv.DictReader(open(tmp_path / "b" / "fig1.csv")))[0]["config_hash"]
    assert ha != hb
