"""Least-squares Monte Carlo estimates of ``E[Y | F_k(X)]``.

Conditioning on the path history up to step ``k`` is approximated by a
cross-sectional regression of ``Y`` on features of ``X`` sampled at a few lag
points ``t_k, t_{k-l_1}, ...``. The intercept is never penalized, so the
average prediction equals the average target exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.preprocessing import PolynomialFeatures
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgumentError, NumericalError
from .paths import StatePath

DEFAULT_LAGS = (0, 2, 4, 8)
DEFAULT_RIDGE = 1e-8
MIN_PATHS_PER_FEATURE = 10


def _as_history(hist):
    if isinstance(hist, StatePath):
        return hist.values
    return check_array(hist, allow_nd=True, ensure_2d=False, dtype=float)


class FeatureBasis(TransformerMixin, BaseEstimator):
    """Features of a state history evaluated at its last time point.

    Parameters
    ----------
    kind : {"polynomial", "fourier"}
        ``polynomial``: all monomials of total degree ``<= degree`` in the
        lagged states. ``fourier``: ``sin(j z), cos(j z)`` for ``j <= degree``
        and every lagged coordinate ``z`` (no cross terms).
    degree : int
    lags : sequence of int
        Grid offsets back from the current step; offsets reaching before
        ``t_0`` read ``X_0``.

    The first output column is always the constant 1.
    """

    def __init__(self, kind="polynomial", degree=2, lags=DEFAULT_LAGS):
        self.kind = kind
        self.degree = degree
        self.lags = lags

    def _validate(self):
        if self.kind not in ("polynomial", "fourier"):
            raise InvalidArgumentError(f"unknown basis kind {self.kind!r}")
        if int(self.degree) < 0 or (self.kind == "fourier" and int(self.degree) < 1):
            raise InvalidArgumentError(f"invalid degree {self.degree} for {self.kind} basis")
        lags = tuple(int(lag) for lag in self.lags)
        if not lags or min(lags) < 0:
            raise InvalidArgumentError("lags must be a non-empty list of non-negative offsets")
        return lags

    def fit(self, X, y=None):
        hist = _as_history(X)
        self._validate()
        self.n_state_ = hist.shape[-1]
        self.n_features_out_ = self.n_features(self.n_state_)
        return self

    def n_features(self, n_state: int) -> int:
        lags = self._validate()
        z = n_state * len(lags)
        if self.kind == "fourier":
            return 1 + 2 * int(self.degree) * z
        return PolynomialFeatures(int(self.degree)).fit(np.zeros((1, z))).n_output_features_

    def lagged(self, hist) -> np.ndarray:
        """Lagged states ``(M, n * len(lags))`` read from ``X_{<=k}`` only."""
        lags = self._validate()
        k = hist.shape[1] - 1
        idx = [max(k - lag, 0) for lag in lags]
        return hist[:, idx, :].reshape(hist.shape[0], -1)

    def transform(self, X):
        hist = _as_history(X)
        if hist.ndim != 3:
            raise InvalidArgumentError(f"expected a history array (M, k+1, n), got shape {hist.shape}")
        z = self.lagged(hist)
        if self.kind == "fourier":
            freqs = np.arange(1, int(self.degree) + 1)
            arg = z[:, :, None] * freqs
            return np.concatenate([np.ones((z.shape[0], 1)), np.sin(arg).reshape(len(z), -1),
                                   np.cos(arg).reshape(len(z), -1)], axis=1)
        return PolynomialFeatures(int(self.degree)).fit_transform(z)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "degree": int(self.degree), "lags": [int(x) for x in self.lags]}


@dataclass
class RegressionFit:
    """Coefficients of one cross-sectional regression and its diagnostics."""

    coefficients: np.ndarray  # (p,) or (p, q); row 0 is the intercept
    basis: FeatureBasis
    step: int
    residual_var: np.ndarray
    target_var: np.ndarray
    condition_number: float
    n_paths: int
    active: np.ndarray = field(repr=False, default=None)
    holdout_residual_var: Optional[np.ndarray] = None

    @property
    def diagnostics(self) -> dict:
        out = {
            "step": self.step,
            "residual_var": np.atleast_1d(self.residual_var).tolist(),
            "target_var": np.atleast_1d(self.target_var).tolist(),
            "condition_number": self.condition_number,
        }
        if self.holdout_residual_var is not None:
            out["holdout_residual_var"] = np.atleast_1d(self.holdout_residual_var).tolist()
        return out


def ridge_solve(A, Y, ridge: float = DEFAULT_RIDGE):
    """Least squares with an unpenalized intercept in column 0 of ``A``.

    Constant columns other than the intercept are dropped (coefficient 0).
    The penalty is ``ridge * trace(G) / p`` on the centered Gram matrix ``G``.

    Returns
    -------
    coef : ndarray, shape (p,) + Y.shape[1:]
    active : bool mask of columns used
    cond : condition number of the solved system
    """
    if ridge < 0:
        raise InvalidArgumentError("ridge must be non-negative")
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    Y2 = Y[:, None] if squeeze else Y
    m, p = A.shape
    if not np.all(A[:, 0] == 1.0):
        raise InvalidArgumentError("first design column must be the constant 1")
    mean_a = A.mean(axis=0)
    mean_y = Y2.mean(axis=0)
    Ac = A - mean_a
    scale = np.abs(A).max(axis=0)
    active = np.abs(Ac).max(axis=0) > 1e-12 * np.maximum(scale, 1e-300)
    active[0] = False
    coef = np.zeros((p, Y2.shape[1]))
    cond = 1.0
    if active.any():
        Aa = Ac[:, active]
        G = Aa.T @ Aa
        rhs = Aa.T @ (Y2 - mean_y)
        lam = ridge * np.trace(G) / G.shape[0]
        eig = np.linalg.eigvalsh(G)
        if lam == 0 and eig[0] <= 1e-12 * eig[-1]:
            raise NumericalError(f"rank-deficient design ({int(active.sum())} active columns) and ridge = 0")
        Gr = G + lam * np.eye(G.shape[0])
        cond = float((eig[-1] + lam) / max(eig[0] + lam, 1e-300))
        try:
            beta = scipy.linalg.solve(Gr, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise NumericalError(f"normal equations could not be solved: {exc}") from None
        coef[active] = beta
    coef[0] = mean_y - mean_a[active] @ coef[active]
    return (coef[:, 0] if squeeze else coef), active, cond


def fit_conditional(targets, paths, basis: FeatureBasis, k: int, ridge: float = DEFAULT_RIDGE,
                    *, holdout: bool = False) -> RegressionFit:
    """Regress per-path ``targets`` on features of ``X_{<=k}``.

    Parameters
    ----------
    targets : array_like, shape (M,) or (M, q)
    paths : StatePath or ndarray (M, >= k+1, n)
    basis : FeatureBasis
    k : int
        Conditioning step.
    ridge : float
        Relative ridge penalty (0 allowed for full-rank designs).
    holdout : bool
        Also refit on the first half and report the residual variance on the
        second half.
    """
    hist = _as_history(paths)[:, : k + 1]
    Y = np.asarray(targets, dtype=float)
    if Y.shape[0] != hist.shape[0]:
        raise InvalidArgumentError(f"{Y.shape[0]} targets for {hist.shape[0]} paths")
    A = basis.transform(hist)
    m, p = A.shape
    if m < MIN_PATHS_PER_FEATURE * p:
        raise InvalidArgumentError(f"{m} paths is fewer than {MIN_PATHS_PER_FEATURE} x {p} features")
    coef, active, cond = ridge_solve(A, Y, ridge)
    resid = Y - A @ coef
    fit = RegressionFit(coef, basis, k, resid.var(axis=0), Y.var(axis=0), cond, m, active)
    if holdout:
        half = m // 2
        c_half, _, _ = ridge_solve(A[:half], Y[:half], ridge)
        fit.holdout_residual_var = (Y[half:] - A[half:] @ c_half).var(axis=0)
    return fit


def predict(fit: RegressionFit, paths, k: Optional[int] = None) -> np.ndarray:
    """``beta . phi(X_{<=k})`` for each path."""
    k = fit.step if k is None else k
    hist = _as_history(paths)[:, : k + 1]
    A = fit.basis.transform(hist)
    if A.shape[1] != fit.coefficients.shape[0]:
        raise InvalidArgumentError(f"basis yields {A.shape[1]} features, fit has {fit.coefficients.shape[0]}")
    return A @ fit.coefficients


class ConditionalExpectation(RegressorMixin, BaseEstimator):
    """Estimator form of :func:`fit_conditional`.

    ``X`` is a history array ``(M, k + 1, n)`` (conditioning on its last
    step), ``y`` the targets.
    """

    def __init__(self, basis=None, ridge=DEFAULT_RIDGE, holdout=False):
        self.basis = basis
        self.ridge = ridge
        self.holdout = holdout

    def fit(self, X, y):
        hist = _as_history(X)
        self.basis_ = self.basis if self.basis is not None else FeatureBasis()
        self.fit_ = fit_conditional(y, hist, self.basis_, hist.shape[1] - 1, self.ridge, holdout=self.holdout)
        self.coef_ = self.fit_.coefficients
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        hist = _as_history(X)
        return predict(self.fit_, hist, hist.shape[1] - 1)


def conditional_drift(udot, X: StatePath, basis: FeatureBasis, P=None, ridge: float = DEFAULT_RIDGE,
                      *, holdout: bool = False):
    """Stepwise ``P_k E[udot_k | F_k(X)]`` for a drift array ``(M, N, d)``.

    The drift is regressed first and projected afterwards; since ``P_k`` is
    known at step ``k`` this equals ``E[P_k udot_k | F_k(X)]`` without asking
    the basis to reproduce the projector.

    Returns
    -------
    estimate : ndarray (M, N, d)
    fits : list of RegressionFit (``None`` for steps with a deterministic drift)
    """
    udot = np.asarray(udot, dtype=float)
    m, n_steps, d = udot.shape
    out = np.empty_like(udot)
    fits = []
    for k in range(n_steps):
        target = udot[:, k]
        if np.array_equal(target, np.broadcast_to(target[0], target.shape)):
            out[:, k] = target[0]
            fits.append(None)
            continue
        fit = fit_conditional(target, X, basis, k, ridge, holdout=holdout)
        out[:, k] = predict(fit, X, k)
        fits.append(fit)
    if P is not None:
        out = P.apply(out)
    return out, fits
