"""Pass/fail statistics and verification reports."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ..paths import MCEstimate

logger = logging.getLogger(__name__)

N_SE = 3.0
# floor for statistics that vanish identically up to floating rounding
ROUNDING_ATOL = 1e-9
ESCALATION_FACTOR = 4
CSV_COLUMNS = ("label", "mean", "std_error", "n", "threshold", "pass")


@dataclass
class Statistic:
    """One tested quantity: ``|estimate - target| <= threshold`` (or one-sided)."""

    label: str
    estimate: MCEstimate
    threshold: float
    passed: bool
    target: float = 0.0
    kind: str = "two-sided"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "mean": self.estimate.mean,
            "std_error": self.estimate.std_error,
            "n_samples": self.estimate.n_samples,
            "target": self.target,
            "threshold": self.threshold,
            "kind": self.kind,
            "pass": bool(self.passed),
        }


def zero_check(label, samples=None, *, estimate: Optional[MCEstimate] = None, target: float = 0.0,
               n_se: float = N_SE, atol: float = ROUNDING_ATOL) -> Statistic:
    """Two-sided test ``|mean - target| <= n_se * SE + atol``."""
    est = estimate if estimate is not None else MCEstimate.from_samples(samples)
    thr = n_se * est.std_error + atol
    return Statistic(label, est, thr, bool(abs(est.mean - target) <= thr), target)


def upper_check(label, samples=None, *, estimate: Optional[MCEstimate] = None, bound: float = 0.0,
                n_se: float = N_SE, atol: float = ROUNDING_ATOL) -> Statistic:
    """One-sided test ``mean <= bound + n_se * SE + atol``."""
    est = estimate if estimate is not None else MCEstimate.from_samples(samples)
    thr = n_se * est.std_error + atol
    return Statistic(label, est, thr, bool(est.mean - bound <= thr), bound, "upper")


def lower_check(label, samples=None, *, estimate: Optional[MCEstimate] = None, bound: float = 0.0,
                n_se: float = N_SE, atol: float = ROUNDING_ATOL) -> Statistic:
    """One-sided test ``mean >= bound - n_se * SE - atol``."""
    est = estimate if estimate is not None else MCEstimate.from_samples(samples)
    thr = n_se * est.std_error + atol
    return Statistic(label, est, thr, bool(bound - est.mean <= thr), bound, "lower")


def value_check(label, value: float, bound: float, *, kind: str = "upper", target: float = 0.0) -> Statistic:
    """Deterministic check of a computed number (no sampling error)."""
    est = MCEstimate(float(value), 0.0, 1)
    if kind == "upper":
        ok = value <= bound
    else:
        ok = abs(value - target) <= bound
    return Statistic(label, est, float(bound), bool(ok), target, kind)


@dataclass
class VerificationReport:
    name: str
    statistics: List[Statistic] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)
    escalated: bool = False
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.statistics)

    @property
    def n_failed(self) -> int:
        return sum(not s.passed for s in self.statistics)

    def add(self, stat: Statistic) -> Statistic:
        self.statistics.append(stat)
        return stat

    def __getitem__(self, label) -> Statistic:
        for s in self.statistics:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "seed": self.seed,
            "escalated": self.escalated,
            "statistics": [s.to_dict() for s in self.statistics],
            "config": self.config,
            "diagnostics": _jsonable(self.diagnostics),
            "timestamp": self.timestamp,
        }

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for s in self.statistics:
            lines.append(f"  [{'ok' if s.passed else 'FAIL'}] {s.label}: {s.estimate.mean:.6g} "
                         f"(se {s.estimate.std_error:.3g}, target {s.target:.6g}, thr {s.threshold:.3g})")
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_stats_csv(reports, path):
    """``label, mean, std_error, n, threshold, pass`` rows, floats to 17 digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            prefix = f"{rep.name}/" if len(reports) > 1 else ""
            for s in rep.statistics:
                writer.writerow([prefix + s.label, f"{s.estimate.mean:.17g}", f"{s.estimate.std_error:.17g}",
                                 s.estimate.n_samples, f"{s.threshold:.17g}", int(s.passed)])


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def run_with_escalation(verifier: Callable[[int], VerificationReport], n_paths: int,
                        factor: int = ESCALATION_FACTOR) -> VerificationReport:
    """Run ``verifier(n_paths)``; on a marginal failure rerun at ``factor * n_paths``.

    A failure is marginal when at most one statistic in twenty (at least one)
    misses its threshold; the rerun's verdict is final.
    """
    report = verifier(n_paths)
    allowed = max(1, len(report.statistics) // 20)
    if 0 < report.n_failed <= allowed:
        logger.info("%s: %d marginal failure(s), rerunning at %d paths", report.name, report.n_failed,
                    factor * n_paths)
        report = verifier(factor * n_paths)
        report.escalated = True
    return report
