import csv
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocecrl.cli import main
from ocecrl.config import RunConfig
from ocecrl.errors import ValidationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def gridnav_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gridnav")
    status = run_cli("run", "--config", CONFIGS / "gridnav.json", "--out", out)
    return status, out


def test_default_gridnav_run(gridnav_run):
    status, out = gridnav_run
    assert status == 0
    rows = list(csv.reader((out / "history.csv").open()))
    assert len(rows) == 1 + RunConfig.load(CONFIGS / "gridnav.json").iterations
    for name in ("checkpoint.json", "config.json", "summary.json", "returns.csv", "constraint_hist.csv"):
        assert (out / name).exists()


def test_run_outputs_are_reproducible(gridnav_run, tmp_path):
    _, first = gridnav_run
    assert run_cli("run", "--config", CONFIGS / "gridnav.json", "--out", tmp_path) == 0
    for name in ("history.csv", "checkpoint.json", "returns.csv", "constraint_hist.csv"):
        assert (first / name).read_bytes() == (tmp_path / name).read_bytes()
    a = json.loads((first / "summary.json").read_text())
    b = json.loads((tmp_path / "summary.json").read_text())
    a.pop("metadata"), b.pop("metadata")
    assert a == b


def test_zero_beta_is_usage_error(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "gridnav.json").read_text())
    cfg["constraints"][0]["beta"] = 0.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert run_cli("run", "--config", path, "--out", tmp_path) == 2
    assert "beta" in capsys.readouterr().err


def test_unknown_field_is_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema": "config.v1", "env": {"name": "gridnav"}, "iterations": 0}))
    assert run_cli("run", "--config", path) == 2
    assert "iterations" in capsys.readouterr().err


def test_missing_arguments_is_usage_error():
    assert run_cli("run") == 2
    assert run_cli("frobnicate") == 2


def test_eval_is_deterministic(gridnav_run, tmp_path):
    _, out = gridnav_run
    ckpt = out / "checkpoint.json"
    assert run_cli("eval", "--checkpoint", ckpt, "--seed", 5, "--out", tmp_path / "a") == 0
    assert run_cli("eval", "--checkpoint", ckpt, "--seed", 5, "--out", tmp_path / "b") == 0
    a = (tmp_path / "a" / "eval.json").read_bytes()
    assert a == (tmp_path / "b" / "eval.json").read_bytes()
    assert json.loads(a)["n_episodes"] == 100


def test_eval_corrupt_checkpoint_is_runtime_error(tmp_path, monkeypatch):
    monkeypatch.setenv("OCECRL_OUT_DIR", str(tmp_path))
    bad = tmp_path / "ckpt.json"
    bad.write_text('{"schema": "ckpt.v1", "t": "oops"}')
    assert run_cli("eval", "--checkpoint", bad, "--out", tmp_path) == 1
    assert (tmp_path / "ocecrl-error.txt").exists()


def test_report_verb(gridnav_run, tmp_path):
    _, out = gridnav_run
    assert run_cli("report", "--checkpoint", out / "checkpoint.json", "--out", tmp_path) == 0
    assert (tmp_path / "summary.json").exists()


def test_verify_suites(capsys):
    assert run_cli("verify", "--suite", "oce") == 0
    out = capsys.readouterr().out
    payload = json.loads(out[:out.rindex("suite oce:")])
    assert payload["passed"] is True
    assert run_cli("verify", "--suite", "bogus") == 2


def test_verify_duality_suite():
    assert run_cli("verify", "--suite", "duality") == 0


# --- config -------------------------------------------------------------------------------

def test_default_protocol_values_accepted():
    cfg = RunConfig(constraints=[{"index": 1}])
    assert cfg.eta_t == cfg.eta_lambda == 5e-5
    assert cfg.batch_size == 8 and cfg.lambda_init == 0.0 and cfg.betas == (1.0, 0.3)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(-5, 5), st.sampled_from(["reward", "cost"]),
    st.integers(1, 10_000), st.integers(1, 64), st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.integers(0, 2**31),
)
def test_config_round_trip(b0, b1, thr, orient, J, B, et, el, seed):
    cfg = RunConfig(env={"name": "two_state", "params": {}}, objective_beta=b0,
                    constraints=[{"index": 1, "beta": b1, "threshold": thr, "orientation": orient}],
                    iterations=J, batch_size=B, eta_t=et, eta_lambda=el, seed=seed,
                    t_init=(0.5, -0.5), t_boxes=((0.1, 1.0), (-1.0, 0.0)))
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_config_rejections():
    with pytest.raises(ValidationError, match="constraints.beta"):
        RunConfig(constraints=[{"index": 1, "beta": 0.0}])
    with pytest.raises(ValidationError, match="constraints.index"):
        RunConfig(constraints=[{"index": 2}])
    with pytest.raises(ValidationError, match="eta"):
        RunConfig(eta_t=0.0)
    with pytest.raises(ValidationError, match="env.name"):
        RunConfig(env={"name": "mars"})
