"""Acceptance battery: criteria 1-8 from one full ``suite`` run, criterion 9 from a second.

Each criterion prints one PASS/FAIL line in the terminal summary.
"""
import json

import pytest

from degmart.cli import ExperimentConfig, run
from degmart.suite import CRITERIA

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow
SEED = 0


def _suite_dir(factory, name):
    out = factory.mktemp(name)
    status = run("suite", ExperimentConfig(verifier="suite", seed=SEED, output_dir=str(out)))
    return out, status


@pytest.fixture(scope="module")
def suite_runs(tmp_path_factory):
    return [_suite_dir(tmp_path_factory, f"suite{i}") for i in (1, 2)]


def _load(out, name):
    return json.loads((out / name).read_text())


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(suite_runs, number):
    (out, _), _ = suite_runs
    report = _load(out, "report.json")
    timing = _load(out, "timings.json")[f"C{number}"]
    stats = [s for s in report["statistics"] if s["label"].startswith(f"C{number}/")]
    failed = [s["label"] for s in stats if not s["pass"]]
    ok = bool(stats) and not failed and timing["within_budget"]
    ACCEPTANCE_LINES.append(
        f"criterion {number} ({CRITERIA[number].title}): {'PASS' if ok else 'FAIL'} "
        f"[{len(stats)} statistics, {timing['elapsed']:.1f}s of {timing['limit']:.0f}s]"
        + (f" failed: {failed}" if failed else ""))
    assert stats
    assert not failed
    assert timing["within_budget"]


def test_criterion_9_determinism(suite_runs):
    (first, status1), (second, status2) = suite_runs
    a, b = _load(first, "report.json"), _load(second, "report.json")
    for rep in (a, b):
        rep.pop("timestamp")
        rep["config"].pop("output_dir")
    same = json.dumps(a) == json.dumps(b)
    same_csv = (first / "stats.csv").read_bytes() == (second / "stats.csv").read_bytes()
    ok = same and same_csv
    ACCEPTANCE_LINES.append(f"criterion 9 (determinism): {'PASS' if ok else 'FAIL'} "
                            f"[two suite runs, seed {SEED}, exit {status1}/{status2}]")
    assert same
    assert same_csv
