import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from roughctl import __version__
from roughctl.cli import dumps, main, table_csv
from roughctl.config import ExperimentConfig, parse_config
from roughctl.errors import ConfigError
from roughctl.signal import GridPath

SMALL = """
[run]
seed = 4
out = "out"

[driver]
n_steps = 256

[integrate]
integrand = "{integrand}"
alphas = 3

[solve]
sigma = "{sigma}"
drift = "{drift}"
x0 = 1.0

[chatter]
atoms = [0.0, 1.0]
weights = [[0.5, 0.5], [0.25, 0.75]]
levels = [1, 4]

[optimize]
regime = "relaxed"
instance = "state_free"
"""


def write_config(directory, integrand="one", sigma="linear", drift="zero", extra=""):
    path = Path(directory) / "exp.toml"
    path.write_text(SMALL.format(integrand=integrand, sigma=sigma, drift=drift) + extra)
    return str(path)


def run(cmd, cfg, cwd, *args):
    old = os.getcwd()
    os.chdir(cwd)
    try:
        return main([cmd, "--config", cfg, *args])
    finally:
        os.chdir(old)


def read_json(path):
    return json.loads(Path(path).read_text())


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig()
        assert cfg.driver.hurst == 0.7

    def test_shipped_default_parses(self):
        root = Path(__file__).resolve().parents[1]
        cfg = parse_config((root / "default.toml").read_text())
        assert cfg.verify.criteria == list(range(1, 12))

    def test_unknown_key_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[run]\nseed = 1\n\n[driver]\nhurts = 0.7\n")
        assert info.value.line == 5

    def test_bad_value_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[driver]\nkind = 'fbm'\nhurst = 0.3\n")
        assert info.value.line == 3
        assert "line 3" in str(info.value)

    def test_toml_syntax_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[run]\nseed = = 3\n")
        assert info.value.line == 2

    def test_regime_compatibility(self):
        with pytest.raises(ConfigError, match="depends on the control"):
            parse_config('[solve]\nmethod = "doss"\nsigma = "control_linear"\n')
        with pytest.raises(ConfigError, match="not a parametric instance"):
            parse_config('[optimize]\nregime = "parametric"\ninstance = "steering"\n')
        with pytest.raises(ConfigError, match="one entry per atom"):
            parse_config("[chatter]\natoms = [0, 1, 2]\nweights = [[0.5, 0.5]]\n")
        with pytest.raises(ConfigError, match="method must be one of"):
            parse_config('[optimize]\nmethod = "grid"\n')

    def test_seed_range(self):
        with pytest.raises(ConfigError):
            parse_config("[run]\nseed = -1\n")


class TestFormats:
    def test_nan_to_null_and_sorted(self):
        text = dumps({"b": float("nan"), "a": np.float64(1.5), "c": [np.int64(2), math.inf]})
        assert json.loads(text) == {"a": 1.5, "b": None, "c": [2, None]}
        assert text.index('"a"') < text.index('"b"')

    def test_csv_precision(self):
        text = table_csv(["t", "x"], [[0.1], [1 / 3]])
        assert text == "t,x\r\n0.10000000000000001,0.33333333333333331\r\n"
        p = GridPath(1.0, [0.0, 1 / 3])
        assert GridPath.from_csv(p.to_csv()).values[1] == 1 / 3


class TestCommands:
    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('[run]\nseed = 1\n\n[solve]\nsigma = "nope"\n')
        assert run("solve", str(bad), tmp_path) == 2
        err = capsys.readouterr().err
        assert "line 5" in err and "nope" in err
        assert not (tmp_path / "out").exists()

    def test_missing_config(self, tmp_path):
        assert run("gen", str(tmp_path / "absent.toml"), tmp_path) == 2

    def test_runtime_failure_writes_error(self, tmp_path):
        cfg = write_config(tmp_path, extra="")
        text = Path(cfg).read_text().replace("weights = [[0.5, 0.5], [0.25, 0.75]]", "weights = [[0.5, 0.5], [0.25, 0.75], [1, 0]]")
        Path(cfg).write_text(text)
        assert run("chatter", cfg, tmp_path) == 1
        err = read_json(tmp_path / "out" / "error.json")
        assert err["command"] == "chatter" and err["message"]
        assert "error.json" in read_json(tmp_path / "out" / "manifest.json")["outputs"]

    def test_integrate_constant(self, tmp_path):
        cfg = write_config(tmp_path, integrand="one")
        assert run("integrate", cfg, tmp_path) == 0
        s = read_json(tmp_path / "out" / "summary.json")
        assert s["riemann"] == pytest.approx(s["increment"], rel=1e-12)
        for v in s["fractional"].values():
            assert v == pytest.approx(s["increment"], rel=1e-2)

    def test_solve_linear_closed_form(self, tmp_path):
        cfg = write_config(tmp_path, sigma="linear", drift="zero")
        assert run("solve", cfg, tmp_path) == 0
        s = read_json(tmp_path / "out" / "summary.json")
        assert s["closed_form"]["relative_error"] <= 1e-2
        lines = (tmp_path / "out" / "trajectory.csv").read_bytes().decode().split("\r\n")
        assert lines[0] == "t,x,y" and lines[-1] == "" and len(lines) == 1 + 257 + 1

    def test_solve_euler(self, tmp_path):
        cfg = write_config(tmp_path, sigma="control_sine", drift="control")
        cfg_text = Path(cfg).read_text().replace("[solve]\n", '[solve]\nmethod = "euler"\n')
        Path(cfg).write_text(cfg_text)
        assert run("solve", cfg, tmp_path) == 0
        assert (tmp_path / "out" / "trajectory.csv").read_bytes().decode().startswith("t,x\r\n")

    def test_gen_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("gen", cfg, tmp_path) == 0
        out = tmp_path / "out"
        man = read_json(out / "manifest.json")
        assert man["tool"] == "roughctl" and man["version"] == __version__
        assert man["command"] == "gen" and man["config"]["run"]["seed"] == 4
        for name, digest in man["outputs"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
        assert GridPath.from_csv((out / "driver.csv").read_text()).values[0] == 0.0

    def test_seed_and_out_override(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("gen", cfg, tmp_path, "--seed", "9", "--out", "other") == 0
        man = read_json(tmp_path / "other" / "manifest.json")
        assert man["config"]["run"]["seed"] == 9 and man["config"]["run"]["out"] == "other"
        assert run("gen", cfg, tmp_path) == 0
        a = (tmp_path / "other" / "driver.csv").read_text()
        b = (tmp_path / "out" / "driver.csv").read_text()
        assert a != b

    def test_chatter_outputs(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("chatter", cfg, tmp_path) == 0
        out = tmp_path / "out"
        assert (out / "partition_m4.csv").read_bytes().decode().startswith("t_start,t_end,atom\r\n")
        relaxed = read_json(out / "relaxed.json")
        assert relaxed["weights"] == [[0.5, 0.5], [0.25, 0.75]]
        s = read_json(out / "summary.json")
        assert s["levels"]["4"]["vague_distance"] < s["levels"]["1"]["vague_distance"]

    def test_optimize_outputs(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("optimize", cfg, tmp_path) == 0
        rep = read_json(tmp_path / "out" / "report.json")
        assert rep["best_cost"] == pytest.approx(0.04, abs=1e-6)
        assert (tmp_path / "out" / "trace.csv").read_bytes().decode().startswith("iter,cost\r\n")

    @pytest.mark.parametrize("cmd", ["gen", "integrate", "solve", "chatter", "optimize"])
    def test_byte_identical_reruns(self, tmp_path, cmd):
        dirs = []
        for k in range(2):
            d = tmp_path / f"run{k}"
            d.mkdir()
            cfg = write_config(d, integrand="driver", sigma="sine_diffusion", drift="relax_to_control")
            assert run(cmd, cfg, d) == 0
            dirs.append(d / "out")
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        for name in names:
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name
