import json
import subprocess
import sys

import pytest

from hardyloc import cli

FAST = ["--grid", "256,8,1"]


def run(tmp_path, *args, baseline=True):
    argv = list(args) + FAST + ["--out", str(tmp_path / "out")]
    if baseline:
        argv += ["--baseline", str(tmp_path / "base.json")]
    return cli.main(argv)


def test_weights_run_writes_artifacts(tmp_path):
    assert run(tmp_path, "weights", "--weight", "exp:1") == cli.EXIT_OK
    doc = json.loads((tmp_path / "out" / "weights.json").read_text())
    assert doc["experiment"] == "weights" and doc["constants"]
    assert (tmp_path / "out" / "weights.csv").exists()


def test_rerun_matches_baseline_and_is_byte_identical(tmp_path):
    assert run(tmp_path, "maximal", "--weight", "exp:1") == cli.EXIT_OK
    first = (tmp_path / "out" / "maximal.json").read_bytes()
    assert run(tmp_path, "maximal", "--weight", "exp:1") == cli.EXIT_OK
    assert (tmp_path / "out" / "maximal.json").read_bytes() == first


def test_regression_exit_code(tmp_path):
    assert run(tmp_path, "weights", "--weight", "exp:1") == cli.EXIT_OK
    path = tmp_path / "base.json"
    data = json.loads(path.read_text())
    for entry in data["entries"].values():
        for c in entry["constants"].values():
            c["value"] = 2 * c["value"] + 1
    path.write_text(json.dumps(data))
    assert run(tmp_path, "weights", "--weight", "exp:1") == cli.EXIT_REGRESSION
    assert run(tmp_path, "weights", "--weight", "exp:1", "--update-baseline") == cli.EXIT_OK
    assert run(tmp_path, "weights", "--weight", "exp:1") == cli.EXIT_OK


@pytest.mark.parametrize("args", [
    ["atoms", "--p", "2"],
    ["weights", "--weight", "bogus:1"],
    ["op-bound", "--corpus", "nothing"],
    ["finite"],
    ["weights", "--config", "/nonexistent.ini"],
])
def test_usage_errors(tmp_path, args):
    assert run(tmp_path, *args) == cli.EXIT_USAGE


def test_bad_grid_flag(tmp_path):
    assert cli.main(["weights", "--grid", "256,8"]) == cli.EXIT_USAGE


def test_small_domain_rejected(tmp_path):
    assert cli.main(["weights", "--grid", "64,2,1", "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_compute_error_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise FloatingPointError("diverged")
    monkeypatch.setitem(cli.RUNNERS, "weights", boom)
    assert run(tmp_path, "weights") == cli.EXIT_COMPUTE


def test_nan_exit_code(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "weights",
                        lambda cfg: ({"x": float("nan")}, {"c": 1.0}, ["a"], [[1.0]]))
    assert run(tmp_path, "weights") == cli.EXIT_NAN
    assert not (tmp_path / "out" / "weights.json").exists()


def test_flags_override_config_file(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[grid]\nm = 128\nL = 8\n[weight]\nweight = powlog:1,1\nseed = 4\n")
    cfg = cli.load_config(str(ini), {"experiment": "weights", "weight": "exp:1"})
    assert cfg.m == 128 and cfg.weight == "exp:1" and cfg.seed == 4


def test_unknown_config_key(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[x]\ncolour = red\n")
    with pytest.raises(cli.UsageError):
        cli.load_config(str(ini), {"experiment": "weights"})


def test_fingerprint_tracks_numerics_only(tmp_path):
    a = cli.load_config(None, {"experiment": "weights", "out": "a"})
    b = cli.load_config(None, {"experiment": "weights", "out": "b"})
    c = cli.load_config(None, {"experiment": "weights", "seed": 9})
    assert a.fingerprint_fields() == b.fingerprint_fields() != c.fingerprint_fields()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hardyloc.cli", "czd", *FAST, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "projection_bound" in proc.stdout or json.loads(proc.stdout.strip().splitlines()[0])
