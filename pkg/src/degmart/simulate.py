"""Euler-Maruyama integration of the state SDE and Girsanov weights.

The perturbed state ``X^U`` is driven by ``dU = dB + udot dt`` built from the
same Brownian increments as ``X`` (common random numbers), so ``u = 0``
reproduces ``X`` bit for bit.
"""
from __future__ import annotations

import logging
from typing import Optional, Union

import numpy as np

from .exceptions import InvalidArgumentError, SimulationError
from .models import ModelSpec
from .paths import AdaptedDrift, BrownianPath, StatePath, TimeGrid
from .rng import RngSpec, standard_normals

logger = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e12
_LOG_MAX = 700.0


def sample_brownian(grid: TimeGrid, d: int, n_paths: int = 1, rng: RngSpec = RngSpec(),
                    *, n_jobs: int = 1) -> BrownianPath:
    """Increments for paths ``rng.stream_id .. rng.stream_id + n_paths - 1``."""
    if d < 1 or n_paths < 1:
        raise InvalidArgumentError("need d >= 1 and n_paths >= 1")
    z = standard_normals(rng.seed, rng.stream_id, n_paths, grid.n_steps * d, n_jobs=n_jobs)
    z *= np.sqrt(grid.dt)
    return BrownianPath(z.reshape(n_paths, grid.n_steps, d), grid)


def euler_solve(model: ModelSpec, B: BrownianPath, u: Optional[AdaptedDrift] = None,
                grid: Optional[TimeGrid] = None, *, clip_u: Optional[float] = None,
                return_drift: bool = False):
    """Euler scheme ``X_{k+1} = X_k + b dt + sigma (dB_k + udot_k dt)``.

    Parameters
    ----------
    model : ModelSpec
    B : BrownianPath
    u : AdaptedDrift, optional
        Drift perturbation of the driver. ``None`` integrates ``X`` itself.
    clip_u : float, optional
        Localization level ``R``: ``udot`` is zeroed on every step after the
        first one where the accumulated ``sum |udot|^2 dt`` exceeds ``R``.
    return_drift : bool
        Also return the drift actually applied, shape ``(M, N, d)``.

    Returns
    -------
    StatePath, or ``(StatePath, ndarray)`` when ``return_drift``.
    """
    grid = grid or B.grid
    if B.dim != model.d:
        raise InvalidArgumentError(f"driver dimension {B.dim} does not match model d={model.d}")
    if u is not None and u.dim != model.d:
        raise InvalidArgumentError(f"drift dimension {u.dim} does not match model d={model.d}")
    if clip_u is not None and clip_u < 0:
        raise InvalidArgumentError("clip_u must be non-negative")
    m, n_steps, dt = B.n_paths, grid.n_steps, grid.dt
    X = np.empty((m, n_steps + 1, model.n))
    X[:, 0] = model.x0
    applied = np.zeros((m, n_steps, model.d)) if (u is not None or return_drift) else None
    energy = np.zeros(m)
    Bvals = B.values if u is not None else None
    for k in range(n_steps):
        t = grid.times[k]
        hist = X[:, : k + 1]
        sig = model.eval_sigma(t, hist)
        drift = model.eval_b(t, hist)
        dW = B.increments[:, k]
        if u is not None:
            udot = u(t, Bvals[:, : k + 1], hist)
            if clip_u is not None:
                udot = np.where((energy <= clip_u)[:, None], udot, 0.0)
                energy += np.einsum("mj,mj->m", udot, udot) * dt
            applied[:, k] = udot
            dW = dW + udot * dt
        X[:, k + 1] = X[:, k] + drift * dt + np.einsum("mij,mj->mi", sig, dW)
        bad = ~np.isfinite(X[:, k + 1]) | (np.abs(X[:, k + 1]) > OVERFLOW_LIMIT)
        if bad.any():
            path = int(np.flatnonzero(bad.any(axis=1))[0])
            raise SimulationError(f"{model.name}: state overflow at step {k} on path {path}", step=k)
    path = StatePath(X, grid)
    return (path, applied) if return_drift else path


def drift_array(u: Union[AdaptedDrift, np.ndarray], B: BrownianPath, X: Optional[StatePath] = None) -> np.ndarray:
    """Evaluate an adapted drift along given paths, shape ``(M, N, d)``."""
    if not isinstance(u, AdaptedDrift):
        arr = np.asarray(u, dtype=float)
        if arr.ndim == 2:
            arr = np.broadcast_to(arr, (B.n_paths,) + arr.shape)
        if arr.shape != B.increments.shape:
            raise InvalidArgumentError(f"drift array shape {arr.shape} does not match {B.increments.shape}")
        return arr
    grid = B.grid
    out = np.empty(B.increments.shape)
    Bvals = B.values
    for k in range(grid.n_steps):
        out[:, k] = u(grid.times[k], Bvals[:, : k + 1], None if X is None else X.history(k))
    return out


def log_girsanov_weight(u, B: BrownianPath, grid: Optional[TimeGrid] = None, sign: int = 1,
                        X: Optional[StatePath] = None) -> np.ndarray:
    if sign not in (1, -1):
        raise InvalidArgumentError("sign must be +1 or -1")
    grid = grid or B.grid
    udot = drift_array(u, B, X)
    return sign * np.einsum("mkj,mkj->m", udot, B.increments) - 0.5 * np.einsum("mkj,mkj->m", udot, udot) * grid.dt


def girsanov_weight(u, B: BrownianPath, grid: Optional[TimeGrid] = None, sign: int = 1,
                    X: Optional[StatePath] = None) -> np.ndarray:
    """``exp(sign * sum udot.dB - 1/2 sum |udot|^2 dt)`` per path.

    ``u`` is an :class:`AdaptedDrift` (evaluated along ``B`` and, if it reads
    the state, along ``X``) or a precomputed drift array.
    """
    return safe_exp(log_girsanov_weight(u, B, grid, sign, X), "Girsanov weight")


def safe_exp(log_values, what="exponential"):
    log_values = np.asarray(log_values)
    if np.any(log_values > _LOG_MAX) or not np.all(np.isfinite(log_values)):
        raise SimulationError(f"{what} overflows (max log value {np.nanmax(log_values):.3g})")
    return np.exp(log_values)


def simulate(model: ModelSpec, grid: TimeGrid, n_paths: int, seed: int = 0, *, first_path: int = 0,
             n_jobs: int = 1):
    """Brownian batch and the unperturbed state paths it drives."""
    B = sample_brownian(grid, model.d, n_paths, RngSpec(seed, first_path), n_jobs=n_jobs)
    return B, euler_solve(model, B)
