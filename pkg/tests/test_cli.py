import csv
import json
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from degmart.cli import ExperimentConfig, build_parser, config_from_args, main, parse_basis, run
from degmart.exceptions import ConfigError


def _report(out):
    return json.loads((out / "report.json").read_text())


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_verify_wick_identity_model(tmp_path):
    out = tmp_path / "wick"
    code = main(["verify-wick", "--model", "M1", "--n-steps", "64", "--n-paths", "1000", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    rep = _report(out)
    assert rep["passed"]
    assert all(abs(s["mean"]) <= 1e-12 for s in rep["statistics"])
    rows = list(csv.reader(open(out / "stats.csv")))
    assert rows[0] == ["label", "mean", "std_error", "n", "threshold", "pass"]
    assert len(rows) == 1 + len(rep["statistics"])


def test_entropy_constant_drift(tmp_path):
    out = tmp_path / "entropy"
    code = main(["entropy", "--model", "M2", "--u", "(0.5,0)", "--n-paths", "100000", "--out", str(out)])
    assert code == 0
    rep = _report(out)
    headline = next(s for s in rep["statistics"] if s["label"] == "H_formula [clip=none]")
    assert abs(headline["mean"] - 0.125) <= 3 * headline["std_error"] + 1e-9
    assert rep["config"]["u"] == "(0.5,0)"


def test_malformed_config_reports_location(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "model": "M2",\n  "n_paths": ,\n}\n')
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    err = _error(capsys)
    assert err["error"] == "config" and err["location"] == "3:14"
    assert json.loads((tmp_path / "o" / "error.json").read_text()) == err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "M2", "n_path": 10}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert _error(capsys)["location"] == "n_path"


@pytest.mark.parametrize("argv,location", [
    (["simulate", "--n-paths", "0"], "n_paths"),
    (["simulate", "--model", "M9"], "model"),
    (["verify-wick", "--h", "(1, 2, 3)"], "h"),
    (["represent", "--F", "x1 +* 2"], None),
    (["simulate", "--exclude-rank-jumps"], "exclude_rank_jumps"),
    (["monge-ampere"], "v"),
])
def test_config_errors_exit_two(tmp_path, capsys, argv, location):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    err = _error(capsys)
    assert err["exit_status"] == 2
    if location is not None:
        assert err["location"] == location


def test_config_file_without_verifier_serves_any_subcommand(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "M1", "n_paths": 300, "n_steps": 16}))
    args = build_parser().parse_args(["verify-wick", "--config", str(cfg), "--seed", "4"])
    resolved = config_from_args(args)
    assert resolved.verifier == "verify-wick"
    assert (resolved.model, resolved.n_paths, resolved.seed) == ("M1", 300, 4)
    cfg.write_text(json.dumps({"verifier": "zeta"}))
    with pytest.raises(ConfigError):
        config_from_args(build_parser().parse_args(["verify-wick", "--config", str(cfg)]))


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "M3", "seed": 1, "basis": {"kind": "fourier", "degree": 1, "lags": [0]}}))
    args = build_parser().parse_args(["represent", "--config", str(cfg), "--seed", "9", "--basis", "polynomial:3:0,2"])
    resolved = config_from_args(args)
    assert resolved.model == "M3" and resolved.seed == 9
    assert resolved.basis == {"kind": "polynomial", "degree": 3, "lags": [0, 2]}


def test_parse_basis_rejects_garbage():
    assert parse_basis("fourier:2") ["kind"] == "fourier"
    with pytest.raises(ConfigError):
        parse_basis("fourier")
    with pytest.raises(ConfigError):
        parse_basis("polynomial:two")


_configs = st.builds(
    ExperimentConfig,
    verifier=st.sampled_from(["simulate", "verify-wick", "represent", "entropy", "zeta"]),
    model=st.sampled_from(["M1", "M2", "M3", "M4", "M5"]),
    n_steps=st.integers(1, 512),
    n_paths=st.integers(1, 10**6),
    seed=st.integers(0, 2**63),
    ridge=st.floats(0, 1),
    clip_u=st.none() | st.floats(0.01, 10),
    u=st.none() | st.just("(x1, 0)") | st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    F=st.none() | st.just("X1(0.5) * x1"),
    expected=st.none() | st.floats(-1, 1),
    holdout=st.booleans(),
)


@given(_configs)
def test_config_round_trip(cfg):
    cfg.validate()
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert set(json.loads(cfg.to_json())) == {f for f in ExperimentConfig.__dataclass_fields__}


def test_report_embeds_resolved_config_and_is_deterministic(tmp_path):
    argv = ["represent", "--model", "M2", "--n-steps", "64", "--n-paths", "3000", "--F", "x1**2", "--seed", "5"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    a, b = _report(tmp_path / "a"), _report(tmp_path / "b")
    assert a["config"]["F"] == "x1**2" and a["config"]["basis"]["kind"] == "polynomial"
    assert a["config"]["output_dir"] == str(tmp_path / "a")
    for rep in (a, b):
        rep.pop("timestamp")
        rep["config"].pop("output_dir")
    assert json.dumps(a) == json.dumps(b)
    assert (tmp_path / "a" / "stats.csv").read_bytes() == (tmp_path / "b" / "stats.csv").read_bytes()
    # the echoed config reproduces the run
    cfg = tmp_path / "echo.json"
    cfg.write_text(json.dumps({k: v for k, v in _report(tmp_path / "a")["config"].items() if k != "output_dir"}))
    assert main(["represent", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    c = _report(tmp_path / "c")
    c.pop("timestamp")
    c["config"].pop("output_dir")
    assert json.dumps(c) == json.dumps(a)


def test_simulate_writes_paths(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--model", "M4", "--n-steps", "8", "--n-paths", "2000", "--write-paths",
                 "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "paths.csv")))
    assert rows[0] == ["step", "t", "x_1", "x_2", "db_1", "db_2"]
    assert len(rows) == 1 + 9
    assert rows[-1][-1] == "" and float(rows[1][2]) == 0.0


def test_runtime_error_exits_one(tmp_path, capsys):
    out = tmp_path / "err"
    code = main(["represent", "--model", "M1", "--n-steps", "8", "--n-paths", "500", "--F", "exp(1000 * abs(x1))",
                 "--out", str(out)])
    assert code == 1
    err = _error(capsys)
    assert err["error"] == "runtime" and err["exit_status"] == 1
    assert (out / "error.json").exists()


def test_failing_statistic_exits_one(tmp_path):
    out = tmp_path / "fail"
    code = main(["entropy", "--model", "M2", "--u", "(0.5,0)", "--n-paths", "20000", "--expected", "0.3",
                 "--out", str(out)])
    assert code == 1
    rep = _report(out)
    # one failure in four is marginal, so the verdict comes from the 4x rerun
    assert not rep["passed"] and rep["escalated"] is True


def test_run_uses_the_subcommand(tmp_path):
    cfg = ExperimentConfig(model="M1", n_steps=8, n_paths=500, output_dir=str(tmp_path))
    assert run("projector-check", cfg) == 0
    assert _report(tmp_path)["name"] == "projector-check"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "degmart", "verify-wick", "--model", "M1", "--n-steps", "8",
                           "--n-paths", "200", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("verify-wick: PASS")
