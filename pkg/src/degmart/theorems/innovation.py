"""Innovation process of a drift-perturbed state and its Girsanov projection.

With ``X^U`` driven by ``dU = dB + udot dt``, the innovation increments are
``dZ_k = dB_k + (udot_k - P_k E[udot_k | F_k(X^U)]) dt`` and
``zeta`` is the exponential of ``-P E[udot | F(X^U)]`` against ``dZ``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..condexp import DEFAULT_RIDGE, FeatureBasis, conditional_drift
from ..exceptions import InvalidArgumentError
from ..models import ModelSpec
from ..paths import AdaptedDrift, BrownianPath, StatePath, TimeGrid
from ..projection import DEFAULT_RANK_TOL, ProjectorSequence, projector_path
from ..rng import RngSpec
from ..simulate import euler_solve, safe_exp, sample_brownian
from .functionals import TERMINAL_FUNCTIONALS, PathBundle, history_functionals
from .report import VerificationReport, zero_check
from .representation import RepresentationResult, fit_representation

logger = logging.getLogger(__name__)

CONDITIONING = ("regression", "exact")
MARTINGALE_WINDOWS = ((0.25, 0.5), (0.5, 1.0))


@dataclass(eq=False)
class InnovationBatch:
    """Perturbed paths with their conditional drift and innovation increments.

    Attributes
    ----------
    X : StatePath
        ``X^U``.
    B : BrownianPath
    udot : ndarray (M, N, d)
        Drift actually applied (after clipping).
    P : ProjectorSequence
        Projectors along ``X^U``.
    cond : ndarray (M, N, d)
        ``P_k E[udot_k | F_k(X^U)]``.
    dZ : ndarray (M, N, d)
    """

    X: StatePath
    B: BrownianPath
    udot: np.ndarray = field(repr=False)
    P: ProjectorSequence = field(repr=False)
    cond: np.ndarray = field(repr=False)
    dZ: np.ndarray = field(repr=False)
    fits: list = field(default_factory=list, repr=False)
    conditioning: str = "regression"

    @property
    def grid(self) -> TimeGrid:
        return self.B.grid

    def bundle(self) -> PathBundle:
        return PathBundle(self.X, self.B, self.dZ, self.P)

    def log_zeta(self) -> np.ndarray:
        """``log zeta_{t_k}`` for ``k = 0..N``, shape ``(M, N + 1)``."""
        inc = -np.einsum("mkj,mkj->mk", self.cond, self.dZ) \
            - 0.5 * np.einsum("mkj,mkj->mk", self.cond, self.cond) * self.grid.dt
        out = np.zeros((inc.shape[0], inc.shape[1] + 1))
        np.cumsum(inc, axis=1, out=out[:, 1:])
        return out

    def martingale_increments(self) -> np.ndarray:
        """``P_k dZ_k``."""
        return self.P.apply(self.dZ)

    def entropy_samples(self) -> np.ndarray:
        """Per-path ``1/2 sum |P_k E[udot_k | F_k(X^U)]|^2 dt``."""
        return 0.5 * np.einsum("mkj,mkj->m", self.cond, self.cond) * self.grid.dt

    def diagnostics(self) -> dict:
        active = [f for f in self.fits if f is not None]
        gap = self.udot - self.cond
        return {
            "conditioning": self.conditioning,
            "regressed_steps": len(active),
            "max_condition_number": max((f.condition_number for f in active), default=1.0),
            "mean_sq_drift_gap": float(np.mean(np.einsum("mkj,mkj->m", gap, gap)) * self.grid.dt),
            "paths_with_rank_jumps": int(np.count_nonzero(self.P.rank_changes())),
        }


def innovation_batch(model: ModelSpec, u: Optional[AdaptedDrift], grid: TimeGrid, B: BrownianPath,
                     basis: Optional[FeatureBasis] = None, *, rank_tol: float = DEFAULT_RANK_TOL,
                     ridge: float = DEFAULT_RIDGE, clip_u: Optional[float] = None,
                     conditioning: str = "regression", holdout: bool = False) -> InnovationBatch:
    """Simulate ``X^U`` on ``B`` and estimate its conditional drift.

    Parameters
    ----------
    conditioning : {"regression", "exact"}
        ``exact`` uses the applied drift itself as its conditional
        expectation, which is only valid when ``u`` reads the perturbed
        state alone (then ``udot_k`` is ``F_k(X^U)``-measurable, clipping
        included).
    """
    if conditioning not in CONDITIONING:
        raise InvalidArgumentError(f"conditioning must be one of {CONDITIONING}")
    u = u if u is not None else AdaptedDrift.zero(model.d)
    if conditioning == "exact" and not u.state_feedback:
        raise InvalidArgumentError("exact conditioning needs a drift that reads the perturbed state only")
    X, udot = euler_solve(model, B, u, grid, clip_u=clip_u, return_drift=True)
    P = projector_path(model, X, grid, rank_tol)
    if conditioning == "exact":
        cond, fits = P.apply(udot), []
    else:
        cond, fits = conditional_drift(udot, X, basis if basis is not None else FeatureBasis(), P, ridge,
                                       holdout=holdout)
    dZ = B.increments + (udot - cond) * grid.dt
    return InnovationBatch(X, B, udot, P, cond, dZ, fits, conditioning)


def simulate_batch(model, u, grid, n_paths, basis=None, seed=0, n_jobs=1, **kw) -> InnovationBatch:
    """:func:`innovation_batch` on a fresh Brownian batch from ``seed``."""
    B = sample_brownian(grid, model.d, n_paths, RngSpec(seed), n_jobs=n_jobs)
    return innovation_batch(model, u, grid, B, basis, **kw)


def innovation_path(model: ModelSpec, u: Optional[AdaptedDrift], grid: TimeGrid, B: BrownianPath,
                    basis: Optional[FeatureBasis] = None, **kw) -> np.ndarray:
    """Innovation increments ``dZ``, shape ``(M, N, d)``."""
    return innovation_batch(model, u, grid, B, basis, **kw).dZ


def zeta_path(model: ModelSpec, u: Optional[AdaptedDrift], grid: TimeGrid, B: BrownianPath,
              basis: Optional[FeatureBasis] = None, **kw) -> np.ndarray:
    """``zeta_{t_k}``, ``k = 0..N``, shape ``(M, N + 1)``."""
    batch = innovation_batch(model, u, grid, B, basis, **kw)
    return safe_exp(batch.log_zeta(), "zeta")


def add_martingale_statistics(report: VerificationReport, batch: InnovationBatch) -> VerificationReport:
    """``E[(M_t - M_s) g(X^U_{<=s})] = 0`` with ``M = sum P dZ``.

    Windows ``(s, t)`` are ``(0.25, 0.5)`` and ``(0.5, 1)``; ``g`` ranges over
    ``1, X^U_s, (X^U_s)^2`` (first coordinate); every driver component is
    tested.
    """
    dM = batch.martingale_increments()
    grid = batch.grid
    for s, t in MARTINGALE_WINDOWS:
        ks, kt = grid.index(s), grid.index(t)
        incr = dM[:, ks:kt].sum(axis=1)
        for gname, g in history_functionals(batch.X, s).items():
            for j in range(incr.shape[1]):
                report.add(zero_check(f"M[{s:g},{t:g}]_{j + 1}*{gname}", incr[:, j] * g))
    return report


def add_zeta_statistics(report: VerificationReport, batch: InnovationBatch, model: ModelSpec) -> VerificationReport:
    """``E[zeta_1] = 1`` and ``E[zeta_1 g(X^U)] = E[g(X)]`` on common paths."""
    zeta = safe_exp(batch.log_zeta()[:, -1], "zeta")
    X = euler_solve(model, batch.B, None, batch.grid)
    report.add(zero_check("zeta_1 - 1", zeta - 1.0))
    for name, g in TERMINAL_FUNCTIONALS.items():
        report.add(zero_check(f"zeta_gap[{name}]", zeta * g(batch.X) - g(X)))
    report.diagnostics["zeta_1_range"] = [float(zeta.min()), float(zeta.max())]
    return report


def verify_innovation_martingale(model: ModelSpec, u: Optional[AdaptedDrift], grid: TimeGrid, n_paths: int,
                                 basis: Optional[FeatureBasis] = None, *, seed: int = 0, n_jobs: int = 1,
                                 **kw) -> VerificationReport:
    """Martingale property of the projected innovation (see :func:`add_martingale_statistics`)."""
    batch = simulate_batch(model, u, grid, n_paths, basis, seed, n_jobs, **kw)
    report = VerificationReport("verify-innovation", seed=seed, diagnostics=batch.diagnostics())
    return add_martingale_statistics(report, batch)


def verify_zeta(model: ModelSpec, u: Optional[AdaptedDrift], grid: TimeGrid, n_paths: int,
                basis: Optional[FeatureBasis] = None, *, seed: int = 0, n_jobs: int = 1,
                **kw) -> VerificationReport:
    """Girsanov consistency of ``zeta`` (see :func:`add_zeta_statistics`)."""
    batch = simulate_batch(model, u, grid, n_paths, basis, seed, n_jobs, **kw)
    report = VerificationReport("zeta", seed=seed, diagnostics=batch.diagnostics())
    return add_zeta_statistics(report, batch, model)


def innovation_represent(target: Callable[[PathBundle], np.ndarray], model: ModelSpec,
                         u: Optional[AdaptedDrift], grid: TimeGrid, n_paths: int,
                         basis: Optional[FeatureBasis] = None, *, seed: int = 0, n_jobs: int = 1,
                         ridge: float = DEFAULT_RIDGE, **kw) -> RepresentationResult:
    """Integrand of an ``F(X^U)`` martingale's terminal value against ``P dZ``.

    ``target`` receives a :class:`PathBundle` whose ``X`` is ``X^U`` and whose
    ``dZ`` holds the innovation increments.
    """
    batch = simulate_batch(model, u, grid, n_paths, basis, seed, n_jobs, ridge=ridge, **kw)
    bundle = batch.bundle()
    y = np.asarray(target(bundle), dtype=float)
    return fit_representation(y, batch.X, batch.dZ, batch.P, grid.dt, basis, ridge, bundle)
