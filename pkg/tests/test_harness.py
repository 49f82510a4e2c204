import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from lanlab.errors import ConfigError
from lanlab.harness import io
from lanlab.harness.cli import main
from lanlab.harness.config import load_config, parse_config
from lanlab.harness.streams import (PURPOSE_RATE, PURPOSE_REPLICATION, derive_stream, splitmix64,
                                    stream_key)

CHAIN = {"model": {"type": "chain", "chain": {"name": "symmetric_two_state"}}, "theta0": 0.3,
         "scheme": {"h": 1.0, "n": 60, "x0": 0}, "lan": {"R": 100}}


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_splitmix64_reference_values():
    # first outputs of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert stream_key(0) == (0xE220A8397B1DCDAF, splitmix64(0xE220A8397B1DCDAF))


def test_streams_deterministic_and_distinct():
    a = derive_stream(42, 3).random(8)
    assert np.array_equal(a, derive_stream(42, 3).random(8))
    assert not np.array_equal(a, derive_stream(42, 4).random(8))
    assert not np.array_equal(a, derive_stream(42, 3, PURPOSE_RATE).random(8))
    assert not np.array_equal(a, derive_stream(43, 3).random(8))
    with pytest.raises(ValueError):
        derive_stream(0, -1)


def test_streams_avalanche_over_seeds():
    # first draws of streams from 1000 consecutive seeds look uniform and uncorrelated
    first = np.array([derive_stream(s, 0, PURPOSE_REPLICATION).random() for s in range(1000)])
    assert abs(first.mean() - 0.5) < 4 * np.sqrt(1 / 12 / 1000)
    assert abs(np.corrcoef(first[:-1], first[1:])[0, 1]) < 4 / np.sqrt(1000)
    bits = [bin(stream_key(s)[0] ^ stream_key(s + 1)[0]).count("1") for s in range(1000)]
    assert abs(np.mean(bits) - 32) < 1.0


def test_config_json_error_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "theta0": 0.3,\n  "model": oops\n}')
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert err.value.line == 3


def test_config_schema_errors():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({**CHAIN, "scheme": {"h": -1.0}}))
    assert "scheme" in str(err.value)
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**CHAIN, "unknown_key": 1}))
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**CHAIN, "lan": {"R": 5}}))


def test_config_defaults_and_hash():
    cfg = parse_config(json.dumps(CHAIN))
    assert cfg["lan"]["R"] == 100
    assert cfg["lan"]["u_list"] == [-2, -1, 1, 2]
    assert cfg["seed"] == 0 and cfg.n == 60 and cfg.n_grid == [60]
    assert cfg.sha256 == parse_config(json.dumps(CHAIN)).sha256


def test_shipped_configs_validate():
    import lanlab

    from pathlib import Path
    for p in (Path(lanlab.__file__).parent / "configs").glob("*.json"):
        load_config(p)


def test_csv_format(tmp_path):
    p = io.write_csv(tmp_path / "t.csv", ["a", "b", "c"], [{"a": 0.1, "b": float("nan"), "c": "x,y"},
                                                         (1, float("-inf"), True)])
    raw = p.read_bytes()
    assert raw.count(b"\r\n") == 3
    assert b"0.10000000000000001" in raw
    assert b'"x,y"' in raw
    header, rows = io.read_csv(p)
    assert header == ["a", "b", "c"]
    assert rows[0]["a"] == 0.1 and np.isnan(rows[0]["b"]) and rows[1]["b"] == -np.inf


def test_cli_chain_oracle_default(tmp_path, capsys):
    assert main(["chain-oracle", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "chain_oracle.json").read_text())
    assert summary["schema"] == 1 and summary["kind"] == "chain-oracle"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"]["chain_oracle.json"] == io.file_sha256(tmp_path / "chain_oracle.json")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["lan", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = write_cfg(tmp_path, {**CHAIN, "theta0": "x"})
    assert main(["lan", "--config", bad, "--out", str(tmp_path)]) == 2
    # theta0 + r_n u outside the parameter interval: runtime failure
    edge = write_cfg(tmp_path, {**CHAIN, "theta0": 0.999, "lan": {"R": 100, "u_list": [5]}}, "edge.json")
    assert main(["lan", "--config", edge, "--out", str(tmp_path)]) == 4
    # a constant drift is not dissipative
    sde = {"model": {"type": "sde", "noise": {"kind": "tempered_stable", "alpha": 0.5, "lambda": 1, "c": 1},
                     "drift": {"name": "constant", "params": {"c0": 1.0}}},
           "theta0": 1.0, "scheme": {"h": 0.5, "n": 10},
           "check_a": {"x_grid": [-5, -2, 2, 5], "theta_grid": [1.0]}}
    assert main(["check-a", "--config", write_cfg(tmp_path, sde, "a.json"), "--out", str(tmp_path)]) == 3
    with pytest.raises(SystemExit):
        main(["lan", "--threads", "0"])


def test_cli_lan_threads_identical(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, CHAIN)
    outs = []
    for k in (1, 4):
        out = tmp_path / f"t{k}"
        assert main(["lan", "--config", cfg, "--out", str(out), "--threads", str(k), "--no-plots"]) == 0
        outs.append((out / "lan_replications.csv").read_bytes())
    monkeypatch.setenv("LANLAB_THREADS", "3")
    out = tmp_path / "env"
    assert main(["lan", "--config", cfg, "--out", str(out), "--no-plots"]) == 0
    assert json.loads((out / "manifest.json").read_text())["threads"] == 3
    assert outs[0] == outs[1] == (out / "lan_replications.csv").read_bytes()
    monkeypatch.setenv("LANLAB_THREADS", "zero")
    assert main(["lan", "--config", cfg, "--out", str(out)]) == 2


def test_cli_seed_override_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, CHAIN)
    for s in (1, 2):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / f"s{s}"), "--seed", str(s)]) == 0
    a = (tmp_path / "s1" / "observations.csv").read_bytes()
    b = (tmp_path / "s2" / "observations.csv").read_bytes()
    assert a != b
    assert json.loads((tmp_path / "s1" / "manifest.json").read_text())["seed"] == 1


def test_cli_report_regenerates_plots(tmp_path):
    cfg = write_cfg(tmp_path, CHAIN)
    out = tmp_path / "r"
    assert main(["lan", "--config", cfg, "--out", str(out), "--no-plots"]) == 0
    assert not (out / "delta_hist.svg").exists()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "delta_hist.svg").read_text().startswith("<svg")
    assert (out / "report_manifest.json").exists()
    assert main(["report", "--out", str(tmp_path / "empty")]) == 4


def test_console_script_installed(tmp_path):
    exe = shutil.which("lanlab")
    cmd = [exe] if exe else [sys.executable, "-m", "lanlab.harness.cli"]
    res = subprocess.run(cmd + ["check-h", "--config", write_cfg(tmp_path, {
        "model": {"type": "sde", "noise": {"kind": "tempered_stable", "alpha": 0.5, "lambda": 1, "c": 1},
                  "drift": {"name": "affine"}},
        "theta0": 1.0, "scheme": {"h": 0.5, "n": 10}}), "--out", str(tmp_path / "h")],
        capture_output=True, text=True, timeout=120)
    assert res.returncode == 0, res.stderr
    rep = json.loads((tmp_path / "h" / "h_report.json").read_text())
    assert rep["ok"] is True
