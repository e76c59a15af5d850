import json
from pathlib import Path

import pytest

from heavytraffic.cli import main
from heavytraffic.config import load_config
from heavytraffic.errors import ConfigError
from heavytraffic.harness import SWEEP_COLUMNS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _toml(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL = """
[system]
kind = "single_server"
arrivals = "bernoulli"
service = "bernoulli p=0.5"
[estimator]
horizon = 60000
seed = 3
[sweep]
eps_grid = [0.3, 0.2, 0.1]
epsilon = 0.2
[output]
formats = ["csv", "json", "long", "samples"]
"""


def test_shipped_configs_parse():
    for name in ("single_server.toml", "jsq.toml", "maxweight.toml"):
        exp = load_config(CONFIGS / name)
        assert exp.eps_grid and exp.estimator.horizon >= 10**7
    assert load_config(CONFIGS / "maxweight.toml").template.face.delta == 0.5


def test_sweep_outputs(tmp_path, capsys):
    cfg = _toml(tmp_path, SMALL)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS) and len(lines) == 4
    fits = json.loads((tmp_path / "o" / "fit.json").read_text())
    assert set(fits["fits"]) == {"linear", "eps_log"}
    long = (tmp_path / "o" / "sweep_long.csv").read_text().splitlines()
    assert long[0] == "epsilon,metric,value"


def test_byte_identical_outputs(tmp_path):
    cfg = _toml(tmp_path, SMALL)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("run.json", "samples.csv", "sweep.csv", "fit.json", "sweep_long.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_inline_overrides(tmp_path):
    cfg = _toml(tmp_path, SMALL)
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--epsilon", "0.1",
                 "--set", "estimator.horizon=40000"]) == 0
    run = json.loads((out / "run.json").read_text())
    assert run["epsilon"] == 0.1 and run["horizon"] == 40000
    assert run["orthogonality_violations"] == 0


def test_unknown_key_is_usage_error(tmp_path, capsys):
    cfg = _toml(tmp_path, SMALL.replace('kind = "single_server"', 'kind = "single_server"\npolciy = "single"'))
    assert main(["simulate", "--config", cfg]) == 2
    assert "polciy" in capsys.readouterr().err
    assert main(["simulate", "--config", _toml(tmp_path, SMALL, "b.toml"), "--set", "estimator.horizn=5"]) == 2
    with pytest.raises(ConfigError):
        load_config(_toml(tmp_path, SMALL + "\n[extra]\nx = 1\n", "c.toml"))


def test_usage_errors(capsys):
    assert main(["bogus"]) == 2
    assert main([]) == 2
    assert main(["stein", "--sigma2", "1"]) == 2


def test_validation_errors_exit_1(tmp_path):
    assert main(["stein", "--sigma2", "1", "--theta", "0", "--out", str(tmp_path)]) == 1
    bad = SMALL.replace('service = "bernoulli p=0.5"', 'service = "bernoulli p=1.5"')
    assert main(["simulate", "--config", _toml(tmp_path, bad)]) == 1
    lb = SMALL.replace('kind = "single_server"', 'kind = "load_balance"\nn = 1')
    assert main(["simulate", "--config", _toml(tmp_path, lb, "lb.toml")]) == 1


def test_schedule_config_requires_face(tmp_path):
    text = """
[system]
kind = "schedule"
n = 2
arrivals = "bernoulli"
service_set = [[1, 0], [0, 1]]
[estimator]
horizon = 1000
"""
    assert main(["simulate", "--config", _toml(tmp_path, text), "--epsilon", "0.1"]) == 2


def test_stein_command(tmp_path):
    out = tmp_path / "s"
    assert main(["stein", "--sigma2", "1", "--theta", "1", "--h", "identity", "--out", str(out)]) == 0
    rep = json.loads((out / "stein_bounds.json").read_text())
    assert rep["holds"] and min(rep["slack_f1"], rep["slack_f2"], rep["slack_f3"]) >= -1e-6
    grid = (out / "stein_grid.csv").read_text().splitlines()
    assert grid[0] == "x,f1,f2,f3,residual" and len(grid) == 2049
    assert main(["stein", "--sigma2", "1", "--theta", "1", "--h", "pwl", "--knots", "0:0,1:1,2:0",
                 "--points", "64", "--out", str(out)]) == 0
    assert main(["stein", "--sigma2", "1", "--theta", "1", "--h", "pwl", "--out", str(out)]) == 1


def test_ssc_command(tmp_path):
    out = tmp_path / "c"
    assert main(["ssc", "--n", "2", "--a-max", "1", "--s-max", "1", "--delta", "0.1", "--r", "1",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "ssc.json").read_text())
    assert rep["constants"]["1"]["V_r"] == pytest.approx(245.657, abs=1e-3)
    assert main(["ssc", "--n", "2"]) == 2
    assert main(["ssc", "--config", str(CONFIGS / "maxweight.toml"), "--horizon", "100000",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "ssc.json").read_text())
    assert all(c["passed"] for c in rep["empirical"]["checks"].values())


def test_ssc_estimates_missing_delta(tmp_path):
    text = (CONFIGS / "maxweight.toml").read_text().replace("delta = 0.5\n", "")
    assert main(["ssc", "--config", _toml(tmp_path, text), "--horizon", "50000",
                 "--out", str(tmp_path / "d")]) == 0
    rep = json.loads((tmp_path / "d" / "ssc.json").read_text())
    assert rep["delta_estimated"] and rep["delta"] == pytest.approx(2**-0.5, abs=0.05)


def test_wasserstein_command(tmp_path, capsys):
    f = tmp_path / "x.csv"
    f.write_text("value\n1.0\n1.0\n1.0\n")
    assert main(["wasserstein", str(f), "--rate", "1", "--out", str(tmp_path)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.7357588823428847, abs=1e-12)
    f.write_text("0.0,3\n")
    assert main(["wasserstein", str(f), "--rate", "2"]) == 0
    f.write_text("-1\n")
    assert main(["wasserstein", str(f), "--rate", "2"]) == 1
