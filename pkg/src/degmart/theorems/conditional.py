"""Weak-form checks of conditional expectations given the state path.

``E[Y | F_1(X)] = Yhat`` is tested through ``E[Y g(X)] = E[Yhat g(X)]`` for
the fixed list of test functionals, with paired (same path) samples.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..condexp import DEFAULT_RIDGE, FeatureBasis, conditional_drift
from ..ito import ito_integral, log_projected_wick, log_wick
from ..models import ModelSpec
from ..paths import AdaptedDrift, CameronMartinFn, TimeGrid
from ..projection import DEFAULT_RANK_TOL, projector_path
from ..simulate import drift_array, safe_exp, simulate
from .functionals import TEST_FUNCTIONALS
from .report import VerificationReport, upper_check, zero_check


def _gap_statistics(report, lhs, rhs, X):
    for name, g in TEST_FUNCTIONALS.items():
        report.add(zero_check(f"gap[{name}]", (lhs - rhs) * g(X)))


def verify_wick_conditional(model: ModelSpec, h: CameronMartinFn, grid: TimeGrid, n_paths: int,
                            *, seed: int = 0, rank_tol: float = DEFAULT_RANK_TOL,
                            n_jobs: int = 1) -> VerificationReport:
    """Gaps ``E[rho(delta h) g(X)] - E[rho(delta_m h) g(X)]`` for each test functional."""
    B, X = simulate(model, grid, n_paths, seed, n_jobs=n_jobs)
    P = projector_path(model, X, grid, rank_tol)
    log_full = log_wick(h.hdot, B.increments, grid.dt)
    log_proj = log_projected_wick(h, P, B)
    full = safe_exp(log_full, "Wick exponential")
    proj = safe_exp(log_proj, "projected Wick exponential")
    report = VerificationReport("verify-wick", seed=seed)
    _gap_statistics(report, full, proj, X)
    report.diagnostics = {
        "mean_wick": float(full.mean()),
        "mean_projected_wick": float(proj.mean()),
        "max_pathwise_gap": float(np.max(np.abs(full - proj))),
        "paths_with_rank_jumps": int(np.count_nonzero(P.rank_changes())),
    }
    return report


def verify_commutation(model: ModelSpec, u: AdaptedDrift, grid: TimeGrid, n_paths: int,
                       basis: Optional[FeatureBasis] = None, *, seed: int = 0,
                       rank_tol: float = DEFAULT_RANK_TOL, ridge: float = DEFAULT_RIDGE,
                       expected_energy: Optional[float] = None, holdout: bool = False,
                       n_jobs: int = 1) -> VerificationReport:
    """Conditioning the Ito integral of ``udot`` on ``F_1(X)``.

    The left side is ``sum udot_k . dB_k``; the right side integrates
    ``P_k E[udot_k | F_k(X)]`` (regressed, then projected) against the same
    increments. Besides the test-functional gaps the report bounds the
    right side's energy by that of ``P udot`` (conditioning contracts
    ``L^2``), and, when ``expected_energy`` is given, tests that value.
    """
    basis = basis if basis is not None else FeatureBasis()
    B, X = simulate(model, grid, n_paths, seed, n_jobs=n_jobs)
    P = projector_path(model, X, grid, rank_tol)
    udot = drift_array(u, B, X)
    cond, fits = conditional_drift(udot, X, basis, P, ridge, holdout=holdout)
    lhs = ito_integral(udot, B)
    rhs = ito_integral(cond, B)
    report = VerificationReport("verify-commutation", seed=seed)
    _gap_statistics(report, lhs, rhs, X)
    rhs_energy = np.einsum("mkj,mkj->m", cond, cond) * grid.dt
    pu = P.apply(udot)
    pu_energy = np.einsum("mkj,mkj->m", pu, pu) * grid.dt
    report.add(upper_check("rhs_energy - projected_energy", rhs_energy - pu_energy))
    if expected_energy is not None:
        report.add(zero_check("rhs_energy", rhs_energy, target=float(expected_energy)))
    active = [f for f in fits if f is not None]
    report.diagnostics = {
        "regressed_steps": len(active),
        "max_condition_number": max((f.condition_number for f in active), default=1.0),
        "paths_with_rank_jumps": int(np.count_nonzero(P.rank_changes())),
    }
    if not report.passed and active:
        report.diagnostics["regressions"] = [f.diagnostics for f in active]
    return report
