"""Structural checks: projector algebra and the discrete martingale problem."""
from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np

from ..models import ModelSpec, apply_generator, coordinate_function, sine_function, square_function
from ..paths import BrownianPath, TimeGrid
from ..projection import DEFAULT_RANK_TOL, batch_projector, projector_path
from ..simulate import euler_solve, simulate
from .report import ROUNDING_ATOL, VerificationReport, value_check, zero_check

ALGEBRA_SHAPES = ((1, 2), (2, 2), (2, 3), (3, 5))
ALGEBRA_TOL = 1e-9


def random_sigmas(n_matrices: int, shape: Tuple[int, int], rng: np.random.Generator):
    """Random ``(n, d)`` matrices built as rank-``r`` products, ``r`` uniform in ``0..min(n, d)``."""
    n, d = shape
    ranks = rng.integers(0, min(n, d) + 1, size=n_matrices)
    out = np.empty((n_matrices, n, d))
    for i, r in enumerate(ranks):
        out[i] = rng.standard_normal((n, r)) @ rng.standard_normal((r, d)) if r else 0.0
    return out, ranks


def _rel(num, den):
    return num / np.maximum(den, 1e-300)


def projector_errors(sig, P, rng):
    """Per-matrix errors of the projector identities."""
    d = P.shape[-1]
    eye = np.eye(d)
    eta = rng.standard_normal((len(P), d))
    xi = rng.standard_normal((len(P), d))
    kern = np.einsum("mij,mj->mi", eye - P, rng.standard_normal((len(P), d)))
    snorm = np.linalg.norm(sig, axis=(1, 2))
    return {
        "idempotence": np.linalg.norm(P @ P - P, axis=(1, 2)),
        "symmetry": np.linalg.norm(P - P.transpose(0, 2, 1), axis=(1, 2)),
        "range": _rel(np.linalg.norm(sig @ P - sig, axis=(1, 2)), snorm),
        "kernel": _rel(np.linalg.norm(np.einsum("mij,mj->mi", sig, np.einsum("mij,mj->mi", eye - P, eta)), axis=1),
                       snorm * np.linalg.norm(eta, axis=1)),
        "kernel_shift": np.linalg.norm(np.einsum("mij,mj->mi", P, xi + kern) - np.einsum("mij,mj->mi", P, xi),
                                       axis=1),
    }


def projector_algebra_check(n_matrices: int = 1000, *, seed: int = 0, rank_tol: float = DEFAULT_RANK_TOL,
                            shapes: Iterable[Tuple[int, int]] = ALGEBRA_SHAPES) -> VerificationReport:
    """Projector identities on random, partly rank-deficient matrices.

    ``n_matrices`` are split evenly across ``shapes``; every error is the
    worst case over all matrices and must stay below ``1e-9``.
    """
    rng = np.random.default_rng(seed)
    shapes = list(shapes)
    worst = {}
    rank_mismatch = 0
    for i, shape in enumerate(shapes):
        count = n_matrices // len(shapes) + (i < n_matrices % len(shapes))
        sig, ranks = random_sigmas(count, shape, rng)
        P, got = batch_projector(sig, rank_tol)
        rank_mismatch += int(np.count_nonzero(got != ranks))
        for key, err in projector_errors(sig, P, rng).items():
            worst[key] = max(worst.get(key, 0.0), float(err.max(initial=0.0)))
    report = VerificationReport("projector-check", seed=seed)
    for key, val in worst.items():
        report.add(value_check(f"max {key} error", val, ALGEBRA_TOL))
    report.add(value_check("rank mismatches", rank_mismatch, 0))
    report.diagnostics = {"n_matrices": n_matrices, "shapes": [list(s) for s in shapes]}
    return report


def projector_path_check(model: ModelSpec, grid: TimeGrid, n_paths: int, *, seed: int = 0,
                         rank_tol: float = DEFAULT_RANK_TOL, report: VerificationReport = None) -> VerificationReport:
    """Projector identities along simulated paths of ``model``."""
    B, X = simulate(model, grid, n_paths, seed)
    P = projector_path(model, X, grid, rank_tol)
    report = report or VerificationReport("projector-check", seed=seed)
    rng = np.random.default_rng(seed)
    worst = {}
    for k in range(grid.n_steps):
        sig = model.eval_sigma(grid.times[k], X.history(k))
        mats = np.broadcast_to(P.mats[:, k], (n_paths,) + P.mats.shape[2:])
        for key, err in projector_errors(sig, mats, rng).items():
            worst[key] = max(worst.get(key, 0.0), float(err.max(initial=0.0)))
    for key, val in worst.items():
        report.add(value_check(f"{model.name}: max {key} error", val, ALGEBRA_TOL))
    jumps = P.rank_changes()
    report.diagnostics.setdefault("rank_jumps", {})[model.name] = {
        "paths_with_jumps": int(np.count_nonzero(jumps)), "total_jumps": int(jumps.sum()),
    }
    return report


def _compensated(model: ModelSpec, X, grid: TimeGrid, funcs, times):
    """Per path ``f(X_t) - f(x_0) - sum_{k < t/dt} Lf(X_{<=k}) dt`` for each ``(f, t)``."""
    gen = {f.label: np.empty((X.n_paths, grid.n_steps)) for f in funcs}
    for k in range(grid.n_steps):
        hist = X.history(k)
        for f in funcs:
            gen[f.label][:, k] = apply_generator(model, f, grid.times[k], hist)
    out = {}
    for t in times:
        kt = grid.index(t)
        for f in funcs:
            comp = gen[f.label][:, :kt].sum(axis=1) * grid.dt
            out[f.label, t] = f.f(X.values[:, kt]) - f.f(X.values[:, 0]) - comp
    return out


def martingale_problem_check(model: ModelSpec, grid: TimeGrid, n_paths: int, *, seed: int = 0,
                             times=(0.5, 1.0), n_jobs: int = 1) -> VerificationReport:
    """``E[f(X_t) - f(x_0) - int_0^t Lf(X_{<=s}) ds] = 0`` for ``f = x_i, x_i^2, sin x_i``.

    The Euler chain has an ``O(dt)`` weak error against the generator, which
    exceeds the Monte Carlo error at moderate path counts. Each path is
    therefore also solved on the grid of half the step size, driven by the
    same Brownian motion, and the Richardson combination
    ``2 s(dt / 2) - s(dt)`` is tested; its bias is ``O(dt^2)``, allowed for
    by adding ``dt^2`` to each threshold (components without noise, such as
    an integrated coordinate, have almost no sampling error to absorb it).
    """
    fine_grid = TimeGrid(2 * grid.n_steps)
    B_fine, X_fine = simulate(model, fine_grid, n_paths, seed, n_jobs=n_jobs)
    inc = B_fine.increments
    B = BrownianPath(inc[:, 0::2] + inc[:, 1::2], grid)
    X = euler_solve(model, B)
    funcs = []
    for i in range(model.n):
        funcs += [coordinate_function(i, model.n), square_function(i, model.n), sine_function(i, model.n)]
    coarse = _compensated(model, X, grid, funcs, times)
    fine = _compensated(model, X_fine, fine_grid, funcs, times)
    report = VerificationReport("simulate", seed=seed)
    bias = {}
    for (label, t), s_coarse in coarse.items():
        s_fine = fine[label, t]
        report.add(zero_check(f"{label} at t={t:g}", 2.0 * s_fine - s_coarse,
                              atol=ROUNDING_ATOL + grid.dt ** 2))
        bias[f"{label} at t={t:g}"] = {"step dt": float(s_coarse.mean()), "step dt/2": float(s_fine.mean())}
    report.diagnostics = {
        "uncorrected_means": bias,
        "mean_terminal_state": X.values[:, -1].mean(axis=0),
        "var_B1": B.terminal().var(axis=0, ddof=1),
    }
    return report
