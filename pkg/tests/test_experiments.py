import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from pnlab import cli
from pnlab.experiments import (
    MANIFEST,
    OUTPUT_ROOT_ENV,
    ConfigError,
    ExperimentConfig,
    inventory,
    point_key,
    run,
    sweep_points,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_SOLVE = """
kind = "solve"
seed = 7

[problem]
rho = 1.0
mu = 0.5
b0 = 0.1
T = 0.2
n = 19
h = "sine"
h_amplitude = 5.0

[solver]
method = "{method}"
dt = 0.02
"""

SMALL_BLOWUP = """
kind = "blowup-study"

[problem]
rho = 1.0
T = 3.0
n = 29
u0 = "v1"
b = {b}

[solver]
dt = 0.01
record_stride = 10
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def _data_files(root):
    return {k: (Path(root) / k).read_bytes() for k in inventory(Path(root))}


# config validation ---------------------------------------------------------------


@pytest.mark.parametrize("text", [
    'kind = "solve"\n[problem]\nrho = -1.0\n',
    'kind = "solve"\n[problem]\nT = 0.0\n',
    'kind = "solve"\n[solver]\nmethod = "explicit"\n',
    'kind = "solve"\n[solver]\ndt = "fast"\n',
    'kind = "nope"\n',
    'kind = "solve"\nseed = -3\n',
    'kind = "verify-embeddings"\n[embeddings]\ndims = [4]\n',
    'kind = "sweep"\n[sweep]\nkind = "sweep"\n',
    'kind = "solve"\n[problem\n',
])
def test_config_errors_exit_2(tmp_path, text, capsys):
    path = _write(tmp_path, "bad.toml", text)
    sub = "sweep" if "sweep" in text else "verify" if "embeddings" in text else "solve"
    assert cli.main([sub, "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_kind_mismatch_is_config_error(tmp_path):
    path = _write(tmp_path, "c.toml", SMALL_SOLVE.format(method="semi-implicit"))
    assert cli.main(["decay", "--config", str(path)]) == 2
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.toml")


def test_seed_override_bounds(tmp_path):
    path = _write(tmp_path, "c.toml", SMALL_SOLVE.format(method="semi-implicit"))
    with pytest.raises(SystemExit):
        cli.main(["solve", "--config", str(path), "--seed", str(2**64)])
    cfg = ExperimentConfig.load(path).with_overrides(seed=2**64 - 1, jobs=2)
    assert cfg.seed == 2**64 - 1 and cfg.jobs == 2


# runs ---------------------------------------------------------------------------------


@pytest.mark.parametrize("method", ["semi-implicit", "implicit-newton", "galerkin"])
def test_solve_run_outputs(tmp_path, method):
    path = _write(tmp_path, "c.toml", SMALL_SOLVE.format(method=method))
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", str(path), "--out", str(out)]) == 0
    man = json.loads((out / MANIFEST).read_text())
    assert man["exit_code"] == 0 and not man["partial"] and man["seed"] == 7
    assert man["config"]["solver"]["method"] == method
    assert man["files"] == inventory(out)
    assert (out / "trajectory" / "diagnostics.csv").exists()


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    path = _write(tmp_path, "c.toml", SMALL_SOLVE.format(method="semi-implicit"))
    assert cli.main(["solve", "--config", str(path), "--out", "rel"]) == 0
    assert (tmp_path / "root" / "rel" / MANIFEST).exists()
    assert cli.main(["solve", "--config", str(path), "--out", str(tmp_path / "abs")]) == 0
    assert (tmp_path / "abs" / MANIFEST).exists()


def test_exit_contract(tmp_path):
    assert cli.main(["verify", "--config", str(CONFIGS / "verify_broken.toml"), "--out", str(tmp_path / "v")]) == 1
    summary = json.loads((tmp_path / "v" / "1d" / "summary.json").read_text())
    assert any(r["violation"] for r in summary.values())
    blow = _write(tmp_path, "b.toml", SMALL_BLOWUP.format(b=30.0))
    assert cli.main(["blowup", "--config", str(blow), "--out", str(tmp_path / "b")]) == 0
    verdict = json.loads((tmp_path / "b" / "verdict.json").read_text())
    assert verdict["status"] == "blow-up-detected" and verdict["monotone_v1_growth"]
    # the same blow-up is a failure when the config does not expect it
    unexpected = _write(tmp_path, "u.toml", SMALL_BLOWUP.format(b=30.0) .replace('u0 = "v1"', 'u0 = "v1"\nexpect = "bounded"'))
    assert cli.main(["blowup", "--config", str(unexpected), "--out", str(tmp_path / "u")]) == 1
    bounded = _write(tmp_path, "ok.toml", SMALL_BLOWUP.format(b=4.0))
    assert cli.main(["blowup", "--config", str(bounded), "--out", str(tmp_path / "ok")]) == 0
    assert json.loads((tmp_path / "ok" / "verdict.json").read_text())["status"] == "bounded"


def test_runs_are_deterministic(tmp_path):
    path = _write(tmp_path, "c.toml", SMALL_SOLVE.format(method="implicit-newton"))
    for d in ("a", "b"):
        assert cli.main(["solve", "--config", str(path), "--out", str(tmp_path / d), "--seed", "123"]) == 0
    assert _data_files(tmp_path / "a") == _data_files(tmp_path / "b")
    ma, mb = (json.loads((tmp_path / d / MANIFEST).read_text()) for d in ("a", "b"))
    assert ma["files"] == mb["files"]
    assert {**ma["config"], "output_dir": None} == {**mb["config"], "output_dir": None}


def test_cli_subprocess_entry(tmp_path):
    path = _write(tmp_path, "c.toml", SMALL_SOLVE.format(method="semi-implicit"))
    res = subprocess.run([sys.executable, "-m", "pnlab.cli", "solve", "--config", str(path), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "exit 0" in res.stdout


# sweeps -------------------------------------------------------------------------------------


def _sweep_text(values):
    return SMALL_BLOWUP.format(b=4.0).replace('kind = "blowup-study"', 'kind = "sweep"\njobs = 2') + (
        f'\n[sweep]\nkind = "blowup-study"\n\n[sweep.grid]\n"problem.b" = {values}\n')


def test_empty_sweep(tmp_path):
    path = _write(tmp_path, "s.toml", _sweep_text("[]"))
    cfg = ExperimentConfig.load(path)
    assert sweep_points(cfg) == []
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "s")]) == 0
    rows = list(csv.reader(open(tmp_path / "s" / "aggregate.csv")))
    assert rows == [["point", "exit_code"]]


def test_single_point_sweep_matches_direct_run(tmp_path):
    path = _write(tmp_path, "s.toml", _sweep_text("[4.0]"))
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "s")]) == 0
    direct = _write(tmp_path, "d.toml", SMALL_BLOWUP.format(b=4.0))
    assert cli.main(["blowup", "--config", str(direct), "--out", str(tmp_path / "d")]) == 0
    point = tmp_path / "s" / "points" / point_key({"problem.b": 4.0})
    assert (point / "verdict.json").read_bytes() == (tmp_path / "d" / "verdict.json").read_bytes()


def test_sweep_is_order_independent(tmp_path):
    a = _write(tmp_path, "a.toml", _sweep_text("[4.0, 30.0, 2.0]"))
    b = _write(tmp_path, "b.toml", _sweep_text("[30.0, 2.0, 4.0]").replace("jobs = 2", "jobs = 1"))
    run(ExperimentConfig.load(a).with_overrides(out=str(tmp_path / "ra")))
    run(ExperimentConfig.load(b).with_overrides(out=str(tmp_path / "rb")))
    agg = [(tmp_path / d / "aggregate.csv").read_text() for d in ("ra", "rb")]
    assert agg[0] == agg[1]
    lines = agg[0].splitlines()[1:]
    assert [ln.split(",")[0] for ln in lines] == ["b=2", "b=30", "b=4"]


def test_inequality_selection(tmp_path):
    out = tmp_path / "v"
    args = ["verify", "--config", str(CONFIGS / "verify.toml"), "--out", str(out), "--inequality", "power-by-laplacian"]
    assert cli.main(args) == 0
    assert sorted(p.name for p in (out / "1d").glob("inequality_*.csv")) == ["inequality_power-by-laplacian_alpha1_beta2.csv"]
    assert sorted(json.loads((out / "2d" / "summary.json").read_text())) == ["power-by-laplacian_alpha1_beta2"]
    assert cli.main(args[:-1] + ["no-such-check"]) == 2
