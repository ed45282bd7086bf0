import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degmart import MCEstimate
from degmart.theorems import Statistic, VerificationReport, run_with_escalation
from degmart.theorems.report import (CSV_COLUMNS, dump_json, lower_check, upper_check, value_check,
                                     write_stats_csv, zero_check)


def test_zero_check_pass_rule():
    est = MCEstimate(0.3, 0.1, 100)
    assert zero_check("a", estimate=est).passed
    assert not zero_check("b", estimate=MCEstimate(0.31, 0.1, 100)).passed
    assert zero_check("c", estimate=MCEstimate(1.3, 0.1, 100), target=1.0).passed
    assert zero_check("d", np.zeros(10)).threshold == pytest.approx(1e-9)


def test_one_sided_checks():
    assert upper_check("u", estimate=MCEstimate(-5.0, 0.1, 10)).passed
    assert not upper_check("u", estimate=MCEstimate(0.5, 0.1, 10)).passed
    assert lower_check("l", estimate=MCEstimate(-0.2, 0.1, 10)).passed
    assert not lower_check("l", estimate=MCEstimate(-0.5, 0.1, 10)).passed
    assert lower_check("l", estimate=MCEstimate(2.0, 0.0, 10), bound=2.0).passed


def test_value_check_is_deterministic():
    assert value_check("v", 1e-10, 1e-9).passed
    assert not value_check("v", 2e-9, 1e-9).passed
    assert value_check("w", 0.51, 0.02, kind="two-sided", target=0.5).passed
    assert value_check("v", 0.0, 0.0).estimate.std_error == 0.0


@given(st.lists(st.booleans(), min_size=0, max_size=30))
def test_report_passes_iff_every_statistic_passes(flags):
    rep = VerificationReport("r")
    for i, ok in enumerate(flags):
        rep.add(Statistic(f"s{i}", MCEstimate(0.0, 0.0, 1), 0.0, ok))
    assert rep.passed == all(flags)
    assert rep.n_failed == flags.count(False)


def test_report_lookup_and_serialisation(tmp_path):
    rep = VerificationReport("r", seed=3, config={"a": 1}, diagnostics={"arr": np.arange(3), "x": np.float64(2)})
    rep.add(zero_check("s", np.array([1.0, -1.0])))
    assert rep["s"].label == "s"
    with pytest.raises(KeyError):
        rep["missing"]
    dump_json(rep.to_dict(), tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["diagnostics"] == {"arr": [0, 1, 2], "x": 2.0}
    assert data["statistics"][0]["pass"] is True
    assert "FAIL" not in rep.summary()


def _fake(n_fail, n_stats=20):
    calls = []

    def verifier(n):
        calls.append(n)
        rep = VerificationReport("fake")
        for i in range(n_stats):
            ok = i >= n_fail or len(calls) > 1
            rep.add(Statistic(f"s{i}", MCEstimate(0.0, 0.0, n), 0.0, ok))
        return rep

    return verifier, calls


def test_marginal_failure_escalates():
    verifier, calls = _fake(1)
    rep = run_with_escalation(verifier, 100)
    assert calls == [100, 400]
    assert rep.escalated and rep.passed


def test_broad_failure_does_not_escalate():
    verifier, calls = _fake(3)
    rep = run_with_escalation(verifier, 100)
    assert calls == [100]
    assert not rep.escalated and not rep.passed


def test_passing_run_is_final():
    verifier, calls = _fake(0)
    assert run_with_escalation(verifier, 100).passed
    assert calls == [100]


def test_stats_csv_round_trips_floats(tmp_path):
    rng = np.random.default_rng(0)
    reps = [VerificationReport("a"), VerificationReport("b")]
    values = rng.standard_normal(4)
    for rep, pair in zip(reps, values.reshape(2, 2)):
        for i, v in enumerate(pair):
            rep.add(zero_check(f"s{i}", estimate=MCEstimate(float(v), 0.1 / 3, 7)))
    write_stats_csv(reps, tmp_path / "stats.csv")
    rows = list(csv.reader(open(tmp_path / "stats.csv")))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["a/s0", "a/s1", "b/s0", "b/s1"]
    assert np.array_equal([float(r[1]) for r in rows[1:]], values)
    assert float(rows[1][2]) == 0.1 / 3
