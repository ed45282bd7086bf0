"""Time grids, path containers and Monte Carlo estimates.

All path containers are batch-first: a batch of ``M`` Brownian paths on an
``N``-step grid has increments of shape ``(M, N, d)``; a batch of state paths
has values of shape ``(M, N + 1, n)``. A single path is a batch with ``M = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .exceptions import InvalidArgumentError
from .rng import RngSpec  # noqa: F401  re-exported


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k / N`` on ``[0, 1]``."""

    n_steps: int

    def __post_init__(self):
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgumentError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        # division rather than k * dt keeps t_N == 1.0 exactly
        return np.arange(self.n_steps + 1) / self.n_steps

    def index(self, t: float) -> int:
        """Grid index of time ``t``; ``t`` must lie on the grid."""
        k = int(round(t * self.n_steps))
        if not 0 <= k <= self.n_steps or abs(k / self.n_steps - t) > 1e-12:
            raise InvalidArgumentError(f"time {t} is not a point of a {self.n_steps}-step grid")
        return k


def make_grid(n_steps: int) -> TimeGrid:
    return TimeGrid(n_steps)


def _as_batch(arr, ndim, name):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == ndim - 1:
        arr = arr[None]
    if arr.ndim != ndim:
        raise InvalidArgumentError(f"{name} must have {ndim - 1} or {ndim} dimensions, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Driver increments ``dB[m, k, j] ~ Normal(0, dt)``."""

    increments: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        inc = _as_batch(self.increments, 3, "increments")
        if inc.shape[1] != self.grid.n_steps:
            raise InvalidArgumentError(
                f"increments cover {inc.shape[1]} steps but the grid has {self.grid.n_steps}"
            )
        if not np.all(np.isfinite(inc)):
            raise InvalidArgumentError("Brownian increments must be finite")
        object.__setattr__(self, "increments", inc)

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]

    @cached_property
    def values(self) -> np.ndarray:
        """``B[m, k]`` at every grid time, ``B[:, 0] = 0``."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1, self.dim))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def terminal(self) -> np.ndarray:
        return self.increments.sum(axis=1)

    def subset(self, mask) -> "BrownianPath":
        return BrownianPath(self.increments[mask], self.grid)


@dataclass(frozen=True, eq=False)
class StatePath:
    """State values ``X[m, k, i]`` at every grid time."""

    values: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        vals = _as_batch(self.values, 3, "values")
        if vals.shape[1] != self.grid.n_steps + 1:
            raise InvalidArgumentError(
                f"state path has {vals.shape[1]} time points, grid needs {self.grid.n_steps + 1}"
            )
        object.__setattr__(self, "values", vals)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def initial(self) -> np.ndarray:
        return self.values[:, 0]

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.grid.index(t)]

    def history(self, k: int) -> np.ndarray:
        """View of ``X_{t_0..t_k}``, shape ``(M, k + 1, n)``."""
        return self.values[:, : k + 1]

    def subset(self, mask) -> "StatePath":
        return StatePath(self.values[mask], self.grid)


@dataclass(frozen=True, eq=False)
class CameronMartinFn:
    """Step function ``hdot`` (constant on each grid cell) of a Cameron-Martin path."""

    hdot: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        hdot = np.asarray(self.hdot, dtype=float)
        if hdot.ndim != 2 or hdot.shape[0] != self.grid.n_steps:
            raise InvalidArgumentError(f"hdot must have shape (N, d) with N={self.grid.n_steps}, got {hdot.shape}")
        if not np.all(np.isfinite(hdot)):
            raise InvalidArgumentError("hdot must be finite")
        object.__setattr__(self, "hdot", hdot)

    @property
    def dim(self) -> int:
        return self.hdot.shape[1]

    @property
    def h_norm_sq(self) -> float:
        return cm_norm_sq(self, self.grid)

    @classmethod
    def constant(cls, vec, grid: TimeGrid) -> "CameronMartinFn":
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        return cls(np.tile(vec, (grid.n_steps, 1)), grid)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], grid: TimeGrid) -> "CameronMartinFn":
        """Sample ``fn`` at left endpoints; ``fn`` maps times ``(N,)`` to ``(N, d)``."""
        vals = np.asarray(fn(grid.times[:-1]), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(vals, grid)


def cm_norm_sq(h: CameronMartinFn, grid: TimeGrid) -> float:
    """Squared Cameron-Martin norm ``sum_k |hdot_k|^2 dt``."""
    if h.hdot.shape[0] != grid.n_steps:
        raise InvalidArgumentError("h is not defined on this grid")
    return float(np.sum(h.hdot**2) * grid.dt)


class AdaptedDrift:
    """Adapted drift ``udot`` evaluated one grid step at a time.

    ``func(t, B_hist, x_hist)`` receives the driver values ``B_{t_0..t_k}``
    with shape ``(M, k + 1, d)`` and the state values ``X_{t_0..t_k}`` with
    shape ``(M, k + 1, n)`` (or ``None``), and returns ``(M, d)`` or a
    broadcastable ``(d,)``. Since ``B_{t_k}`` only involves increments
    ``0..k-1``, the drift applied on cell ``k`` never sees increment ``k``.

    ``state_feedback`` marks drifts that read only ``x_hist``; for those the
    density of the perturbed law is available in closed form.
    """

    def __init__(self, func, dim: int, *, state_feedback: bool = False, label: str = "u"):
        self.func = func
        self.dim = int(dim)
        self.state_feedback = state_feedback
        self.label = label

    def __call__(self, t, B_hist, x_hist=None) -> np.ndarray:
        m = B_hist.shape[0]
        out = np.asarray(self.func(t, B_hist, x_hist), dtype=float)
        out = np.broadcast_to(out, (m, self.dim)) if out.ndim < 2 else out
        if out.shape != (m, self.dim):
            raise InvalidArgumentError(f"drift {self.label} returned shape {out.shape}, expected {(m, self.dim)}")
        return out

    def __repr__(self):
        return f"AdaptedDrift({self.label!r}, dim={self.dim})"

    @classmethod
    def zero(cls, dim: int) -> "AdaptedDrift":
        return cls(lambda t, b, x: np.zeros(dim), dim, state_feedback=True, label="0")

    @classmethod
    def constant(cls, vec) -> "AdaptedDrift":
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        return cls(lambda t, b, x: vec, vec.size, state_feedback=True, label=str(vec.tolist()))

    @classmethod
    def from_array(cls, udot, label: str = "replay") -> "AdaptedDrift":
        """Replay a precomputed ``(M, N, d)`` drift, step ``k`` read from ``udot[:, k]``."""
        udot = np.asarray(udot, dtype=float)

        def func(t, B_hist, x_hist):
            return udot[:, B_hist.shape[1] - 1]

        return cls(func, udot.shape[2], label=label)


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error."""

    mean: float
    std_error: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples) -> "MCEstimate":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise InvalidArgumentError("cannot estimate from an empty sample")
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        return cls(float(np.mean(x)), sd / np.sqrt(x.size), int(x.size))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_samples": self.n_samples}
