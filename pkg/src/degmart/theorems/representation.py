"""Recovery of the integrand of a functional against the projected martingale.

The functional ``F`` is written as ``E[F] + sum_k (P_k xi_k) . dB_k`` with
``xi_k = beta_k^T phi(X_{<=k})``. The coefficients of all steps are fitted
jointly by least squares on the design columns ``phi_i(X_{<=k}) (P_k dB_k)_j``;
since those columns are nearly orthogonal across steps, block coordinate
descent (one step at a time, a few sweeps) converges in two or three sweeps
and costs one small regression per step per sweep.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted

from ..condexp import DEFAULT_RIDGE, MIN_PATHS_PER_FEATURE, FeatureBasis
from ..exceptions import InvalidArgumentError, NumericalError, ResidualWarning
from ..models import ModelSpec
from ..paths import MCEstimate, StatePath, TimeGrid
from ..projection import DEFAULT_RANK_TOL, ProjectorSequence, projector_path
from ..simulate import simulate
from .functionals import PathBundle

logger = logging.getLogger(__name__)

RESIDUAL_WARN_FRACTION = 0.2


def _values(X):
    return X.values if isinstance(X, StatePath) else np.asarray(X, dtype=float)


def _step_design(A, dm_k):
    """Columns ``A[:, i] * dm_k[:, j]``, flattened ``(M, p * d)`` (i major)."""
    return (A[:, :, None] * dm_k[:, None, :]).reshape(A.shape[0], -1)


def _solve_block(D, r, ridge):
    G = D.T @ D
    rhs = D.T @ r
    lam = ridge * np.trace(G) / G.shape[0]
    if lam == 0:
        eig = np.linalg.eigvalsh(G)
        if eig[0] <= 1e-12 * eig[-1]:
            raise NumericalError(f"rank-deficient step design ({G.shape[0]} columns) and ridge = 0")
    try:
        return scipy.linalg.solve(G + lam * np.eye(G.shape[0]), rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"step normal equations could not be solved: {exc}") from None


class MartingaleRepresentation(RegressorMixin, BaseEstimator):
    """Least-squares integrand of ``y`` against projected increments.

    Parameters
    ----------
    basis : FeatureBasis, optional
        Features of the state history; default quadratic polynomials.
    ridge : float
        Relative ridge penalty per step block.
    max_sweeps : int
        Upper bound on block coordinate sweeps over the steps.
    tol : float
        Stop when a sweep lowers the residual sum of squares by less than
        this fraction of the centered total sum of squares.

    Notes
    -----
    ``fit(X, y, increments=dB, projectors=P)``; ``X`` is a :class:`StatePath`
    or an ``(M, N + 1, n)`` array, ``increments`` the ``(M, N, d)`` driver
    increments. After fitting, ``coef_`` has shape ``(N, p, d)``.
    """

    def __init__(self, basis=None, ridge=DEFAULT_RIDGE, max_sweeps=8, tol=1e-5):
        self.basis = basis
        self.ridge = ridge
        self.max_sweeps = max_sweeps
        self.tol = tol

    def fit(self, X, y, increments=None, projectors: Optional[ProjectorSequence] = None):
        if increments is None:
            raise InvalidArgumentError("increments are required")
        xv = _values(X)
        y = np.asarray(y, dtype=float)
        dB = np.asarray(increments, dtype=float)
        m, n_steps, d = dB.shape
        if y.shape != (m,) or xv.shape[:2] != (m, n_steps + 1):
            raise InvalidArgumentError(f"shapes disagree: X {xv.shape}, y {y.shape}, increments {dB.shape}")
        if not np.all(np.isfinite(y)):
            raise InvalidArgumentError("target has non-finite values")
        basis = self.basis if self.basis is not None else FeatureBasis()
        p = basis.n_features(xv.shape[2])
        if m < MIN_PATHS_PER_FEATURE * p * d:
            raise InvalidArgumentError(f"{m} paths is fewer than {MIN_PATHS_PER_FEATURE} x {p * d} step columns")
        dm = projectors.apply(dB) if projectors is not None else dB

        self.basis_ = basis
        self.intercept_ = float(y.mean())
        coef = np.zeros((n_steps, p * d))
        active = np.zeros((n_steps, p * d), dtype=bool)
        resid = y - self.intercept_
        rss_hist = [float(resid @ resid)]
        for sweep in range(int(self.max_sweeps)):
            for k in range(n_steps):
                D = _step_design(basis.transform(xv[:, : k + 1]), dm[:, k])
                if sweep == 0:
                    norms = np.einsum("mc,mc->c", D, D)
                    active[k] = norms > 1e-24 * max(norms.max(), 1e-300)
                if not active[k].any():
                    continue
                Da = D[:, active[k]]
                r_k = resid + Da @ coef[k, active[k]]
                beta = _solve_block(Da, r_k, self.ridge)
                coef[k, active[k]] = beta
                resid = r_k - Da @ beta
            # the martingale columns are centered only in expectation, so the constant is refitted too
            shift = float(resid.mean())
            self.intercept_ += shift
            resid = resid - shift
            rss_hist.append(float(resid @ resid))
            if rss_hist[-2] - rss_hist[-1] <= self.tol * rss_hist[0]:
                break
        self.coef_ = coef.reshape(n_steps, p, d)
        self.active_ = active.reshape(n_steps, p, d)
        self.residual_ = resid
        self.rss_history_ = rss_hist
        self.n_sweeps_ = len(rss_hist) - 1
        self.n_active_ = int(active.sum())
        return self

    def integrand(self, X, projectors: Optional[ProjectorSequence] = None) -> np.ndarray:
        """``P_k xi_k`` along the given paths, shape ``(M, N, d)``."""
        check_is_fitted(self, "coef_")
        xv = _values(X)
        n_steps = self.coef_.shape[0]
        out = np.empty((xv.shape[0], n_steps, self.coef_.shape[2]))
        for k in range(n_steps):
            out[:, k] = self.basis_.transform(xv[:, : k + 1]) @ self.coef_[k]
        return projectors.apply(out) if projectors is not None else out

    def predict(self, X, increments=None, projectors: Optional[ProjectorSequence] = None) -> np.ndarray:
        if increments is None:
            raise InvalidArgumentError("increments are required")
        xi = self.integrand(X, projectors)
        return self.intercept_ + np.einsum("mkj,mkj->m", xi, np.asarray(increments, dtype=float))

    def energy(self, X, dt: float, projectors: Optional[ProjectorSequence] = None):
        """Debiased ``E sum_k |P_k xi_k|^2 dt`` and the raw per-path energies.

        With ``r`` fitted columns and residual variance ``s^2``, the fit
        absorbs ``s^2 r / M`` of pure noise into the mean energy even when
        the target has no martingale part (standard deviation
        ``s^2 sqrt(2 r) / M``). That bias is subtracted and its spread is
        added to the standard error.
        """
        xi = self.integrand(X, projectors)
        raw = np.einsum("mkj,mkj->m", xi, xi) * dt
        est = MCEstimate.from_samples(raw)
        m = raw.size
        s2 = float(self.residual_ @ self.residual_) / max(m - self.n_active_ - 1, 1)
        bias = s2 * self.n_active_ / m
        null_se = s2 * np.sqrt(2.0 * self.n_active_) / m
        return MCEstimate(est.mean - bias, float(np.hypot(est.std_error, null_se)), m), raw


@dataclass
class RepresentationResult:
    """Fitted integrand of a functional and its diagnostics.

    ``integrand`` is ``P_k xi_k`` per path and step (post-projection);
    ``coefficients`` the basis coefficients ``(N, p, d)`` of ``xi_k``.
    """

    integrand: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    mean: float
    residual_l2: float
    target_variance: float
    energy: MCEstimate
    raw_energy: MCEstimate
    n_sweeps: int
    basis: FeatureBasis
    bundle: Optional[PathBundle] = field(default=None, repr=False)
    residual_warning: bool = False

    @property
    def target_std(self) -> float:
        return float(np.sqrt(self.target_variance))

    def relative_error(self, truth) -> float:
        """Relative L2 distance of ``integrand`` to a reference ``(N, d)`` or ``(M, N, d)``."""
        truth = np.broadcast_to(np.asarray(truth, dtype=float), self.integrand.shape)
        num = np.mean(np.einsum("mkj,mkj->m", self.integrand - truth, self.integrand - truth))
        den = np.mean(np.einsum("mkj,mkj->m", truth, truth))
        if den == 0:
            raise InvalidArgumentError("reference integrand is identically zero")
        return float(np.sqrt(num / den))

    def diagnostics(self) -> dict:
        return {
            "mean": self.mean,
            "residual_l2": self.residual_l2,
            "target_std": self.target_std,
            "energy": self.energy.to_dict(),
            "raw_energy": self.raw_energy.to_dict(),
            "n_sweeps": self.n_sweeps,
            "basis": self.basis.to_dict(),
            "residual_warning": self.residual_warning,
        }


def _half_gram(est, xv, dm, rows, k):
    D = _step_design(est.basis_.transform(xv[rows, : k + 1]), dm[rows, k])[:, est.active_[k].ravel()]
    G = D.T @ D
    return G + est.ridge * np.trace(G) / G.shape[0] * np.eye(G.shape[0])


def cross_fitted_energy(est, X, y, increments, projectors, dt) -> MCEstimate:
    """``E sum_k |P_k xi_k|^2 dt`` from two independent half-sample fits.

    The per-path products ``<xi^A, xi^B> dt`` of the two halves' integrands
    have mean exactly zero when ``y`` has no martingale part, whatever the
    law of the noise, so no bias correction is needed. The null spread
    ``s_A s_B sqrt(sum_k tr(G_A^-1 H G_B^-1 H)) / M`` (``G`` the half-sample
    step Gram matrices, ``H`` their sum) is added to the standard error.
    Falls back to the in-sample debiased estimate when a half is too small.
    """
    xv = _values(X)
    y = np.asarray(y, dtype=float)
    dB = np.asarray(increments, dtype=float)
    m, n_steps, d = dB.shape
    half = m // 2
    if half < MIN_PATHS_PER_FEATURE * est.coef_.shape[1] * d:
        return est.energy(X, dt, projectors)[0]
    sub_p = projectors.subset if projectors is not None else (lambda rows: None)
    rows = (np.arange(half), np.arange(half, m))
    fits = [clone(est).fit(xv[r], y[r], dB[r], sub_p(r)) for r in rows]
    xi_a, xi_b = (f.integrand(xv, projectors) for f in fits)
    prod = MCEstimate.from_samples(np.einsum("mkj,mkj->m", xi_a, xi_b) * dt)

    dm = projectors.apply(dB) if projectors is not None else dB
    trace = 0.0
    for k in range(n_steps):
        if not est.active_[k].any():
            continue
        Ga, Gb = (_half_gram(est, xv, dm, r, k) for r in rows)
        H = Ga + Gb
        trace += float(np.trace(np.linalg.solve(Ga, H) @ np.linalg.solve(Gb, H)))
    s2 = [float(f.residual_ @ f.residual_) / max(len(r) - f.n_active_ - 1, 1) for f, r in zip(fits, rows)]
    null_se = np.sqrt(s2[0] * s2[1] * max(trace, 0.0)) / m
    return MCEstimate(prod.mean, float(np.hypot(prod.std_error, null_se)), m)


def fit_representation(y, X, increments, projectors, dt, basis=None, ridge=DEFAULT_RIDGE,
                       bundle: Optional[PathBundle] = None) -> RepresentationResult:
    """Fit :class:`MartingaleRepresentation` and package the result.

    ``energy`` is cross-fitted (:func:`cross_fitted_energy`); ``raw_energy``
    is the in-sample energy of the full-sample integrand.
    """
    est = MartingaleRepresentation(basis, ridge).fit(X, y, increments, projectors)
    _, raw = est.energy(X, dt, projectors)
    energy = cross_fitted_energy(est, X, y, increments, projectors, dt)
    y = np.asarray(y, dtype=float)
    resid_sd = float(np.std(est.residual_, ddof=1))
    target_var = float(np.var(y, ddof=1))
    flagged = resid_sd > RESIDUAL_WARN_FRACTION * np.sqrt(target_var) + 1e-12
    if flagged:
        warnings.warn(f"representation residual {resid_sd:.3g} exceeds {RESIDUAL_WARN_FRACTION:.0%} "
                      f"of the target std {np.sqrt(target_var):.3g}", ResidualWarning, stacklevel=3)
    return RepresentationResult(
        integrand=est.integrand(X, projectors),
        coefficients=est.coef_,
        mean=est.intercept_,
        residual_l2=resid_sd,
        target_variance=target_var,
        energy=energy,
        raw_energy=MCEstimate.from_samples(raw),
        n_sweeps=est.n_sweeps_,
        basis=est.basis_,
        bundle=bundle,
        residual_warning=bool(flagged),
    )


def represent_functional(F: Callable[[PathBundle], np.ndarray], model: ModelSpec, grid: TimeGrid,
                         n_paths: int, basis: Optional[FeatureBasis] = None, *, seed: int = 0,
                         rank_tol: float = DEFAULT_RANK_TOL, ridge: float = DEFAULT_RIDGE,
                         exclude_rank_jumps: bool = False, n_jobs: int = 1) -> RepresentationResult:
    """Integrand of ``F(X)`` against ``dm = P dB`` on a fresh batch.

    ``F`` maps a :class:`PathBundle` (fields ``X``, ``B``, ``P``) to one value
    per path.
    """
    B, X = simulate(model, grid, n_paths, seed, n_jobs=n_jobs)
    P = projector_path(model, X, grid, rank_tol)
    if exclude_rank_jumps:
        keep = P.rank_changes() == 0
        logger.info("excluding %d paths with rank jumps", int((~keep).sum()))
        B, X, P = B.subset(keep), X.subset(keep), P.subset(keep)
    bundle = PathBundle(X, B, P=P)
    y = np.asarray(F(bundle), dtype=float)
    return fit_representation(y, X, B.increments, P, grid.dt, basis, ridge, bundle)
