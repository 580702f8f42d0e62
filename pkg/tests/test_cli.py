import filecmp
import json
import os
from importlib import resources

import numpy as np
import pytest

from rotorecho import cli, textio

CONFIGS = resources.files("rotorecho") / "configs"


def cfg_path(name):
    return str(CONFIGS / f"{name}.ini")


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_every_experiment_has_a_shipped_config():
    for name in cli.EXPERIMENTS:
        c = cli.load_config(name, cfg_path(name), [], None, None)
        assert set(c.values) == set(cli.SCHEMAS[name])
    literal = cli.load_config("quantum-echo", cfg_path("quantum-echo-literal"), [], None, None)
    assert literal.values["deltaK"] == 1e-3


def test_empty_config_is_usage_error(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["timescales", "--config", write(tmp_path, ""), "--out", str(out)])
    assert code == 2
    assert not out.exists()


@pytest.mark.parametrize(
    "text",
    [
        "[timescales]\nK = 10\nKk = 3\n",
        "[mixing]\nK = 10\n",
        "[timescales]\nK = ten\n",
        "[timescales]\nK = 10\n[extra]\na = 1\n",
        "[timescales]\nK = 10\n[run]\nsead = 3\n",
    ],
)
def test_bad_configs_rejected(tmp_path, text):
    out = tmp_path / "out"
    assert cli.main(["timescales", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert not out.exists()


def test_missing_file_and_bad_override(tmp_path):
    assert cli.main(["timescales", "--config", str(tmp_path / "nope.ini")]) == 2
    good = write(tmp_path, "[timescales]\nK = 10\n")
    assert cli.main(["timescales", "--config", good, "--set", "nokey=1", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["timescales", "--config", good, "--set", "K", "--out", str(tmp_path / "o")]) == 2


def test_unknown_subcommand():
    assert cli.main(["figure-9", "--config", "x.ini"]) == 2


def test_timescales_summary(tmp_path):
    out = tmp_path / "ts"
    assert cli.main(["timescales", "--config", cfg_path("timescales"), "--out", str(out)]) == 0
    d = json.loads((out / "summary.json").read_text())["derived"]
    assert round(d["tau_r"], 1) == 7.2
    assert round(d["tau_m"], 1) == 4.3
    assert round(d["tau_E"], 1) == 4.3
    assert d["tau_H"] == 1000
    assert d["gamma_sq"] == pytest.approx(1.3079, abs=1e-3)


def test_override_and_seed_are_echoed(tmp_path):
    out = tmp_path / "p"
    code = cli.main(["poincare", "--config", cfg_path("poincare"), "--out", str(out), "--seed", "11",
                     "--set", "t=200", "--set", "lyapunov_samples=100", "--set", "lyapunov_t=200"])
    s = json.loads((out / "summary.json").read_text())
    assert s["seed"] == 11 and s["config"]["t"] == 200
    assert s["backend"] in ("cython", "python") and s["version"]
    assert code in (0, 1)
    data = textio.read_table(str(out / "section.dat"))
    assert data.shape == (201, 3)
    assert "section.dat" in (out / "section.gp").read_text()


def test_check_failure_exits_one(tmp_path):
    out = tmp_path / "m"
    code = cli.main(["mixing", "--config", cfg_path("mixing"), "--out", str(out),
                     "--set", "times=1,2", "--set", "M=20000", "--set", "dump_points=100"])
    assert code == 1
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "check-failed" and not s["partial"]


def test_runtime_error_is_flagged(tmp_path):
    out = tmp_path / "e"
    # N = 1 passes parsing but the quantum module refuses it
    code = cli.main(["qpropagate", "--config", cfg_path("qpropagate"), "--out", str(out), "--set", "N=1"])
    assert code == 1
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "error" and s["partial"] and s["error"]


def test_reruns_are_byte_identical(tmp_path):
    args = ["mixing", "--config", cfg_path("mixing"), "--set", "M=50000", "--set", "dump_points=500"]
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(args + ["--out", str(a)])
    cli.main(args + ["--out", str(b)])
    files = sorted(f for f in os.listdir(a) if f != "summary.json")
    assert files and files == sorted(f for f in os.listdir(b) if f != "summary.json")
    match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    assert not mismatch and not errors
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    sa.pop("timings"), sb.pop("timings")
    assert sa == sb


def test_table_roundtrip_is_exact(tmp_path):
    v = np.array([0.1, 1 / 3, 2.0**-40, 12345.678901234567])
    path = textio.write_table(str(tmp_path / "s.dat"), "series", [np.arange(4), v, v * 2], ["note"])
    back = textio.read_table(path)
    assert np.array_equal(back[:, 1], v)
    head = open(path).read().splitlines()[:2]
    assert head == ["# note", "# t value stderr"]


def test_table_shape_errors(tmp_path):
    with pytest.raises(ValueError):
        textio.write_table(str(tmp_path / "x.dat"), "fidelity", [np.arange(3)])
    with pytest.raises(ValueError):
        textio.write_table(str(tmp_path / "x.dat"), "fidelity", [np.arange(3), np.arange(4)])
