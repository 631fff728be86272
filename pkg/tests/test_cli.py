import json

import numpy as np
import pytest

from fbmsde.cli import check_expectation, main, read_config
from fbmsde.errors import ConfigError


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


def test_generate_rows_manifest_and_determinism(tmp_path):
    out = tmp_path / "p.csv"
    assert run("generate", "--hurst", 0.3, "--steps", 1024, "--horizon", 1, "--seed", 42, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,value" and len(lines) == 1026
    manifest = json.loads((tmp_path / "p.csv.manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["base_seed"] == 42
    assert manifest["outputs"] == [str(out)] and "duration_s" in manifest and manifest["version"]
    first = out.read_bytes()
    run("generate", "--hurst", 0.3, "--steps", 1024, "--horizon", 1, "--seed", 42, "--out", out)
    assert out.read_bytes() == first


def test_generate_rejects_bad_hurst(tmp_path, capsys):
    code = run("generate", "--hurst", 1.2, "--steps", 8, "--seed", 1, "--out", tmp_path / "q.csv")
    assert code == 2
    assert "(0,1)" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["solve", "--scheme", "rk4"])
    assert info.value.code == 2


def test_solve_flow_matches_exponential(tmp_path):
    x, b = tmp_path / "x.csv", tmp_path / "b.csv"
    assert run("solve", "--scheme", "flow", "--sigma", "linear", "--x0", 1, "--hurst", 0.5, "--steps", 4096,
               "--seed", 7, "--out", x) == 0
    run("generate", "--hurst", 0.5, "--steps", 4096, "--seed", 7, "--out", b)
    xs, bs = load(x), load(b)
    assert np.max(np.abs(xs[:, 1] - np.exp(bs[:, 1]))) < 1e-9
    manifest = json.loads((tmp_path / "x.csv.manifest.json").read_text())
    assert manifest["config"]["residual"] >= 0


@pytest.mark.parametrize("scheme,drift,pattern", [
    ("cn", "linear", "b = 0"),
    ("flow", "affine(1)", "vanishes on S"),
])
def test_solve_model_errors(tmp_path, capsys, scheme, drift, pattern):
    code = run("solve", "--scheme", scheme, "--sigma", "linear", "--drift", drift, "--x0", 1, "--hurst", 0.5,
               "--steps", 64, "--seed", 7, "--out", tmp_path / "s.csv")
    assert code == 3
    assert pattern in capsys.readouterr().err


def test_solve_unknown_preset(tmp_path):
    assert run("solve", "--scheme", "euler", "--sigma", "expo", "--x0", 1, "--hurst", 0.5, "--steps", 8,
               "--seed", 1, "--out", tmp_path / "s.csv") == 2


def test_solve_cn_records_iterations(tmp_path):
    out = tmp_path / "cn.csv"
    assert run("solve", "--scheme", "cn", "--sigma", "sin-bounded", "--x0", 1, "--hurst", 0.4, "--steps", 64,
               "--seed", 7, "--out", out) == 0
    hist = json.loads((tmp_path / "cn.csv.manifest.json").read_text())["config"]["iteration_histogram"]
    assert sum(hist.values()) == 64


def test_solve_doss(tmp_path):
    out = tmp_path / "d.csv"
    assert run("solve", "--scheme", "doss", "--sigma", "cos-bounded", "--drift", "linear -0.5", "--x0", 0.3,
               "--hurst", 0.6, "--steps", 64, "--seed", 3, "--out", out) == 0
    assert len(load(out)) == 65


def test_config_parsing():
    cfg, expect = read_config("hurst = 0.12, 0.4  # two values\nn_grid=128 256\nseed=3\n"
                              "expect.verdict@0.4 = converges\n", "cn-barrier")
    assert cfg["hurst"] == [0.12, 0.4] and cfg["n_grid"] == [128, 256] and cfg["x0"] == 1.0
    assert expect == {"verdict@0.4": "converges"}
    for bad in ("hurst=\nn_grid=128\nseed=1", "hurst=0.4\nn_grid=128\nseed=1\ncolour=red",
                "hurst=0.4\nseed=1", "hurst=0.4\nn_grid=a,b\nseed=1", "just words"):
        with pytest.raises(ConfigError):
            read_config(bad, "cn-barrier")


@pytest.mark.parametrize("actual,spec,ok", [
    (1.01, "1 +- 0.02", True), (1.03, "1 +- 0.02", False), (0.05, "< 0.1", True), (-0.5, "-0.55..-0.45", True),
    ("converges", "converges", True), (True, "yes", True), (None, "< 1", False),
])
def test_expectations(actual, spec, ok):
    assert check_expectation(actual, spec) is ok


def test_experiment_empty_hurst_list(tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("hurst =\nn_grid = 128, 256\nseed = 1\n")
    assert run("experiment", "cn-barrier", "--config", cfg, "--out-dir", tmp_path) == 2
    assert "hurst" in capsys.readouterr().err


def test_experiment_expectation_mismatch_sets_exit_status(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("hurst=0.5\np=2\nn_grid=64,128,256\npaths=50\nseed=1\nexpect.verdict = diverges\n")
    assert run("experiment", "power-sum", "--config", cfg, "--out-dir", tmp_path) == 1
    cfg.write_text("hurst=0.5\np=2\nn_grid=64,128,256\npaths=50\nseed=1\nexpect.nonsense = 1\n")
    assert run("experiment", "power-sum", "--config", cfg, "--out-dir", tmp_path) == 2


def test_experiment_barrier_report(tmp_path):
    cfg = tmp_path / "barrier.cfg"
    cfg.write_text("x0 = 1\nhurst = 0.12, 0.4\nn_grid = 128, 256, 512, 1024, 2048, 4096, 8192\npaths = 500\n"
                   "seed = 2024\nexpect.verdict@0.12 = non-convergent\nexpect.verdict@0.4 = converges\n")
    assert run("experiment", "cn-barrier", "--config", cfg, "--out-dir", tmp_path) == 0
    report = json.loads((tmp_path / "cn-barrier.json").read_text())
    assert [r["verdict"] for r in report["results"]] == ["non-convergent", "converges"]
    header = (tmp_path / "cn-barrier.csv").read_text().splitlines()[0]
    assert header.startswith("n,l2_error,std_error,discards")


@pytest.mark.parametrize("name,body", [
    ("euler-rate", "hurst=0.7\nn_grid=64,128,256\npaths=20\nseed=1\nlimit_check=yes\n"),
    ("cn-rate", "hurst=0.45\nn_grid=64,128,256\npaths=20\nseed=1\n"),
    ("ito-formula", "f=monomial 4\nhurst=0.2\nm=1\nn_grid=64,128,256\npaths=20\nseed=1\n"),
    ("cn-law", "alpha=1\nhurst=0.4\nn=256\npaths=50\nseed=1\n"),
])
def test_every_experiment_replays_identically(tmp_path, monkeypatch, name, body):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(body)
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("FBMSDE_THREADS", "1")
    assert run("experiment", name, "--config", cfg, "--out-dir", a) == 0
    monkeypatch.setenv("FBMSDE_THREADS", "3")
    assert run("replay", a / f"{name}.manifest.json", "--out-dir", b) == 0
    for suffix in (".json", ".csv"):
        assert (a / f"{name}{suffix}").read_bytes() == (b / f"{name}{suffix}").read_bytes()
    data = json.loads((a / f"{name}.json").read_text())
    assert data["schema_version"] == 1 and data["base_seed"] == 1


def test_replay_generate_and_solve(tmp_path):
    run("generate", "--hurst", 0.3, "--steps", 64, "--seed", 5, "--out", tmp_path / "p.csv")
    run("solve", "--scheme", "euler", "--sigma", "sin-bounded", "--x0", 0.1, "--hurst", 0.3, "--steps", 64,
        "--seed", 5, "--out", tmp_path / "s.csv")
    for name in ("p.csv", "s.csv"):
        assert run("replay", tmp_path / f"{name}.manifest.json", "--out-dir", tmp_path / "r") == 0
        assert (tmp_path / name).read_bytes() == (tmp_path / "r" / name).read_bytes()
