import json
import subprocess
import sys

import pytest

from inspection_rta.cli import EXIT_OK, EXIT_SAFETY, EXIT_USAGE, main
from inspection_rta.config import ConfigError, RunConfig, dump_config, load_config

STUB = f"{sys.executable} -m inspection_rta.stub_policy"


def test_config_round_trip(tmp_path):
    a = RunConfig()
    text = dump_config(a)
    b = load_config(text=text)
    assert b == a and dump_config(b) == text
    c = load_config(text="[episode]\nseed = 9\n[controller.pd]\nkp = 0.05\n")
    d = load_config(text=dump_config(c))
    assert d == c and d.episode.seed == 9 and d.controller.pd.kp == 0.05


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(text="[episode]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(text="[episode\nseed = 1\n")
    bad = tmp_path / "bad.toml"
    bad.write_text("[episode]\nseed = \n")
    assert main(["episode", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    unk = tmp_path / "unk.toml"
    unk.write_text("[vehicle]\nmass_typo = 3\n")
    assert main(["episode", "--config", str(unk), "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["episode", "--config", str(tmp_path / "missing.toml")]) == EXIT_USAGE


def test_usage_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["episode", "--policy", "nope", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["batch", "--episodes", "0", "--out", str(tmp_path)]) == EXIT_USAGE


def test_dump_defaults(capsys):
    assert main(["dump-defaults"]) == EXIT_OK
    out = capsys.readouterr().out
    assert load_config(text=out) == RunConfig()
    assert main(["--dump-defaults"]) == EXIT_OK
    assert capsys.readouterr().out == out


def test_check_filter_exit_codes(tmp_path, capsys):
    assert main(["check-filter", "--out", str(tmp_path / "on")]) == EXIT_OK
    rep = json.loads((tmp_path / "on" / "check_filter_seed0.json").read_text())
    assert rep["passed"] and rep["min_separation"] >= 0.0
    assert main(["check-filter", "--rta", "off", "--out", str(tmp_path / "off")]) == EXIT_SAFETY
    rep = json.loads((tmp_path / "off" / "check_filter_seed0.json").read_text())
    assert not rep["passed"]
    assert "Collision" in capsys.readouterr().out


def test_episode_files_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["episode", "--seed", "3", "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("episode_seed3.jsonl", "episode_seed3_metrics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    m = json.loads((tmp_path / "a" / "episode_seed3_metrics.json").read_text())
    assert m["termination"] in ("Timeout", "PowerDepleted") and m["episode_length"] <= 12236


def test_external_stub_matches_zero_policy(tmp_path):
    assert main(["episode", "--seed", "5", "--out", str(tmp_path / "z")]) == EXIT_OK
    assert main(["episode", "--seed", "5", "--policy", f"external:{STUB}", "--out", str(tmp_path / "x")]) == EXIT_OK
    a = (tmp_path / "z" / "episode_seed5.jsonl").read_bytes()
    b = (tmp_path / "x" / "episode_seed5.jsonl").read_bytes()
    assert a == b


def test_external_malformed_aborts(tmp_path):
    rc = main(["episode", "--policy", f"external:{STUB} --mode malformed", "--out", str(tmp_path)])
    assert rc not in (EXIT_OK, EXIT_USAGE)


def test_recompute_matches_episode_metrics(tmp_path, capsys):
    assert main(["episode", "--seed", "2", "--policy", "random", "--out", str(tmp_path)]) == EXIT_OK
    capsys.readouterr()
    assert main(["recompute", str(tmp_path / "episode_seed2.jsonl")]) == EXIT_OK
    got = json.loads(capsys.readouterr().out)
    stored = json.loads((tmp_path / "episode_seed2_metrics.json").read_text())
    stored.pop("policy")
    assert got == stored


def test_batch_single_episode_degenerates(tmp_path):
    assert main(["batch", "--episodes", "1", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "batch_summary.json").read_text())
    ep = doc["episodes"][0]
    for name, d in doc["metrics"].items():
        v = ep["violation_pct"]["Any"] if name == "violation_any" else ep[name]
        assert d["iqm"] == d["mean"] == d["ci_lo"] == d["ci_hi"] == v
    assert doc["seeds"] == [4]
    text = (tmp_path / "batch_summary.txt").read_text()
    assert "Safe separation" in text and "Any constraint" in text


def test_batch_parallel_equals_serial(tmp_path):
    assert main(["batch", "--episodes", "3", "--jobs", "1", "--out", str(tmp_path / "s")]) == EXIT_OK
    assert main(["batch", "--episodes", "3", "--jobs", "2", "--out", str(tmp_path / "p")]) == EXIT_OK
    for name in ("batch_summary.json", "batch_summary.txt"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "inspection_rta.cli", "dump-defaults"], capture_output=True, text=True)
    assert r.returncode == 0 and "[episode]" in r.stdout
