"""Path bundles, the fixed list of test functionals, and expression adapters."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from ..exceptions import ConfigError
from ..expressions import driver_names, parse_scalar, parse_vector, state_names
from ..paths import AdaptedDrift, BrownianPath, CameronMartinFn, StatePath, TimeGrid
from ..projection import ProjectorSequence


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Everything a path functional may read: state, driver, innovation, projectors."""

    X: StatePath
    B: BrownianPath
    dZ: Optional[np.ndarray] = None
    P: Optional[ProjectorSequence] = None


# g_j(X) used to test conditional-expectation identities in weak form
TEST_FUNCTIONALS: Dict[str, Callable[[StatePath], np.ndarray]] = {
    "1": lambda X: np.ones(X.n_paths),
    "X_1": lambda X: X.at(1.0)[:, 0],
    "X_1^2": lambda X: X.at(1.0)[:, 0] ** 2,
    "sin X_1": lambda X: np.sin(X.at(1.0)[:, 0]),
    "X_0.5 X_1": lambda X: X.at(0.5)[:, 0] * X.at(1.0)[:, 0],
}

TERMINAL_FUNCTIONALS = {k: TEST_FUNCTIONALS[k] for k in ("X_1", "X_1^2", "sin X_1")}


def history_functionals(X: StatePath, s: float) -> Dict[str, np.ndarray]:
    """``{1, X_s, X_s^2}`` on the first coordinate."""
    xs = X.at(s)[:, 0]
    return {"1": np.ones(X.n_paths), f"X_{s:g}": xs, f"X_{s:g}^2": xs**2}


def vector_arg(value, dim: int, what: str):
    """Accept a numeric vector, an expression tuple string, or a list."""
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)) and any(isinstance(v, str) for v in value):
        return [str(v) for v in value]
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be numbers or expressions, got {value!r}", location=what) from None
    if arr.shape != (dim,):
        raise ConfigError(f"{what} must have {dim} components, got {arr.shape}", location=what)
    return arr


def _check_len(exprs, dim, what):
    if len(exprs) != dim:
        raise ConfigError(f"{what} has {len(exprs)} components, the driver has {dim}", location=what)


def cameron_martin_from(value, grid: TimeGrid, dim: int) -> CameronMartinFn:
    """``h`` from a constant vector or an expression tuple in ``t``."""
    if isinstance(value, CameronMartinFn):
        return value
    value = vector_arg(value, dim, "h")
    if isinstance(value, np.ndarray):
        return CameronMartinFn.constant(value, grid)
    exprs = parse_vector(value, ["t"])
    _check_len(exprs, dim, "h")
    t = grid.times[:-1]
    cols = [np.broadcast_to(np.asarray(e({"t": t}), dtype=float), t.shape) for e in exprs]
    return CameronMartinFn(np.stack(cols, axis=1), grid)


def drift_from(value, n: int, dim: int, label: str = "u") -> AdaptedDrift:
    """Adapted drift from a constant vector or an expression tuple.

    Expressions may read ``t``, the current perturbed state ``x1..xn`` and
    the current driver values ``B1..Bd``.
    """
    if isinstance(value, AdaptedDrift):
        return value
    value = vector_arg(value, dim, label)
    if isinstance(value, np.ndarray):
        return AdaptedDrift.constant(value)
    exprs = parse_vector(value, ["t"] + state_names(n) + driver_names(dim))
    _check_len(exprs, dim, label)
    uses_driver = any(name.startswith("B") for e in exprs for name in e.names)

    def func(t, B_hist, x_hist):
        m = B_hist.shape[0]
        env = {"t": t}
        env.update({f"B{j + 1}": B_hist[:, -1, j] for j in range(dim)})
        if x_hist is not None:
            env.update({f"x{i + 1}": x_hist[:, -1, i] for i in range(n)})
        out = np.empty((m, dim))
        for j, e in enumerate(exprs):
            out[:, j] = e(env)
        return out

    return AdaptedDrift(func, dim, state_feedback=not uses_driver, label=str(value))


def state_drift_from(value, n: int, dim: int, label: str = "v") -> AdaptedDrift:
    """Drift functional of the state path only (``t``, ``x1..xn``)."""
    if isinstance(value, AdaptedDrift):
        if not value.state_feedback:
            raise ConfigError(f"{label} must depend on the state path only", location=label)
        return value
    value = vector_arg(value, dim, label)
    if isinstance(value, np.ndarray):
        return AdaptedDrift.constant(value)
    exprs = parse_vector(value, ["t"] + state_names(n))
    _check_len(exprs, dim, label)
    return drift_from(value, n, dim, label)


def functional_from(value, n: int, dim: int) -> Callable[[PathBundle], np.ndarray]:
    """Path functional from an expression.

    Bare ``x1..xn``, ``B1..Bd`` and ``Z1..Zd`` are terminal values (``Z`` is
    the innovation process, available only where one is computed);
    ``X1(0.5)``, ``B2(0.25)``, ``Z1(0.5)`` sample a coordinate at a grid time.
    """
    if callable(value):
        return value
    zs = [f"Z{j + 1}" for j in range(dim)]
    expr = parse_scalar(value, state_names(n) + driver_names(dim) + zs, sample_prefixes=("X", "B", "Z"))
    needs_z = any(name.startswith("Z") for name in expr.names) or any(nm[0] == "Z" for nm, _ in expr.samples)

    def func(bundle: PathBundle):
        env = {f"x{i + 1}": bundle.X.values[:, -1, i] for i in range(n)}
        Bv = bundle.B.values
        env.update({f"B{j + 1}": Bv[:, -1, j] for j in range(dim)})
        Zv = None
        if needs_z:
            if bundle.dZ is None:
                raise ConfigError("Z is only defined for the innovation verifiers", location=value)
            Zv = np.zeros((bundle.dZ.shape[0], bundle.dZ.shape[1] + 1, dim))
            np.cumsum(bundle.dZ, axis=1, out=Zv[:, 1:])
            env.update({f"Z{j + 1}": Zv[:, -1, j] for j in range(dim)})
        for name, s in expr.samples:
            idx = int(name[1:]) - 1
            limit = n if name[0] == "X" else dim
            if idx >= limit:
                raise ConfigError(f"{name} exceeds dimension {limit}", location=value)
            if name[0] == "X":
                env[(name, s)] = bundle.X.at(s)[:, idx]
            else:
                arr = Bv if name[0] == "B" else Zv
                env[(name, s)] = arr[:, bundle.B.grid.index(s), idx]
        out = expr(env)
        return np.broadcast_to(np.asarray(out, dtype=float), (bundle.X.n_paths,)).copy()

    func.source = value
    return func
