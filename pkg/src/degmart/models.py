"""Path-dependent coefficient specifications and the diffusion generator.

A model is ``dX = b(t, X) dt + sigma(t, X) dB`` with ``X`` in R^n and ``B`` in
R^d. Coefficient callbacks are vectorized over paths: they receive the time
``t_k`` and the state history ``X_{t_0..t_k}`` of shape ``(M, k + 1, n)`` and
return ``(M, n, d)`` for sigma and ``(M, n)`` for b (constant outputs of shape
``(n, d)`` / ``(n,)`` are broadcast).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigError, InvalidArgumentError, ModelError
from .expressions import parse_scalar, state_names


@dataclass(frozen=True, eq=False)
class ModelSpec:
    n: int
    d: int
    x0: np.ndarray
    sigma: Callable
    b: Callable
    lipschitz_K: Optional[float] = None
    name: str = "custom"
    description: str = ""
    config: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.n,):
            raise InvalidArgumentError(f"x0 must have shape ({self.n},), got {x0.shape}")
        object.__setattr__(self, "x0", x0)

    def eval_sigma(self, t, hist) -> np.ndarray:
        m = hist.shape[0]
        out = np.asarray(self.sigma(t, hist), dtype=float)
        if out.shape == (self.n, self.d):
            out = np.broadcast_to(out, (m, self.n, self.d))
        if out.shape != (m, self.n, self.d):
            raise ModelError(f"{self.name}: sigma returned shape {out.shape}, expected {(m, self.n, self.d)}")
        if not np.all(np.isfinite(out)):
            raise ModelError(f"{self.name}: sigma is not finite at t={t}")
        return out

    def eval_b(self, t, hist) -> np.ndarray:
        m = hist.shape[0]
        out = np.asarray(self.b(t, hist), dtype=float)
        if out.shape == (self.n,):
            out = np.broadcast_to(out, (m, self.n))
        if out.shape != (m, self.n):
            raise ModelError(f"{self.name}: b returned shape {out.shape}, expected {(m, self.n)}")
        if not np.all(np.isfinite(out)):
            raise ModelError(f"{self.name}: b is not finite at t={t}")
        return out


@dataclass(frozen=True)
class TestFunction:
    """Smooth ``f: R^n -> R`` with gradient and Hessian, vectorized over rows."""

    __test__ = False  # not a pytest class

    f: Callable
    grad: Callable
    hess: Callable
    label: str = "f"


def coordinate_function(i: int, n: int) -> TestFunction:
    def grad(x):
        g = np.zeros_like(x)
        g[:, i] = 1.0
        return g

    return TestFunction(lambda x: x[:, i], grad, lambda x: np.zeros(x.shape + (n,)), f"x{i + 1}")


def square_function(i: int, n: int) -> TestFunction:
    def grad(x):
        g = np.zeros_like(x)
        g[:, i] = 2 * x[:, i]
        return g

    def hess(x):
        h = np.zeros(x.shape + (n,))
        h[:, i, i] = 2.0
        return h

    return TestFunction(lambda x: x[:, i] ** 2, grad, hess, f"x{i + 1}^2")


def sine_function(i: int, n: int) -> TestFunction:
    def grad(x):
        g = np.zeros_like(x)
        g[:, i] = np.cos(x[:, i])
        return g

    def hess(x):
        h = np.zeros(x.shape + (n,))
        h[:, i, i] = -np.sin(x[:, i])
        return h

    return TestFunction(lambda x: np.sin(x[:, i]), grad, hess, f"sin x{i + 1}")


def eval_a(model: ModelSpec, t, hist) -> np.ndarray:
    """Diffusion matrix ``a = sigma sigma^T`` of shape ``(M, n, n)``."""
    s = model.eval_sigma(t, hist)
    return np.einsum("mij,mkj->mik", s, s)


def apply_generator(model: ModelSpec, f: TestFunction, t, hist) -> np.ndarray:
    """``Lf = 1/2 sum_ij a_ij d_ij f(X_t) + sum_i b_i d_i f(X_t)`` per path."""
    x = hist[:, -1]
    a = eval_a(model, t, hist)
    b = model.eval_b(t, hist)
    return 0.5 * np.einsum("mij,mij->m", a, f.hess(x)) + np.einsum("mi,mi->m", b, f.grad(x))


def _current(hist):
    return hist[:, -1, 0]


def _m1():
    return ModelSpec(1, 1, [0.0], lambda t, h: np.ones((1, 1)), lambda t, h: np.zeros(1), 0.0,
                     "M1_scalar_bm", "dX = dB (Wiener measure)")


def _m2():
    return ModelSpec(1, 2, [0.0], lambda t, h: np.array([[1.0, 0.0]]), lambda t, h: np.zeros(1), 0.0,
                     "M2_rank_one", "dX = dB^1 with a two-dimensional driver")


def _m3_sigma(t, hist):
    x = _current(hist)
    return np.stack([np.cos(x), np.sin(x)], axis=-1)[:, None, :]


def _m3():
    return ModelSpec(1, 2, [0.0], _m3_sigma, lambda t, h: np.zeros(1), 1.0,
                     "M3_rotating_frame", "dX = cos X dB^1 + sin X dB^2")


def _m4_b(t, hist):
    out = np.zeros((hist.shape[0], 2))
    out[:, 1] = hist[:, -1, 0]
    return out


def _m4():
    return ModelSpec(2, 2, [0.0, 0.0], lambda t, h: np.array([[1.0, 0.0], [0.0, 0.0]]), _m4_b, 1.0,
                     "M4_integrator", "dX1 = dB^1, dX2 = X1 dt")


def _m5_sigma_of(y):
    out = np.zeros((y.shape[0], 1, 2))
    out[:, 0, 0] = 1.0 + 0.5 * np.sin(y)
    return out


def _m5():
    return ModelSpec(1, 2, [0.0], lambda t, h: _m5_sigma_of(_current(h)), lambda t, h: -0.5 * h[:, -1],
                     0.5, "M5_path_dependent", "dX = (1 + sin(X)/2) dB^1 - X/2 dt")


def _m5_sup():
    return ModelSpec(1, 2, [0.0], lambda t, h: _m5_sigma_of(h[:, :, 0].max(axis=1)),
                     lambda t, h: -0.5 * h[:, -1], 0.5, "M5_path_dependent_sup",
                     "dX = (1 + sin(max_{s<=t} X_s)/2) dB^1 - X/2 dt")


BUILTIN_MODELS = {
    "M1_scalar_bm": _m1,
    "M2_rank_one": _m2,
    "M3_rotating_frame": _m3,
    "M4_integrator": _m4,
    "M5_path_dependent": _m5,
    "M5_path_dependent_sup": _m5_sup,
}
_ALIASES = {name.split("_")[0]: name for name in BUILTIN_MODELS if name != "M5_path_dependent_sup"}


def builtin_model(name: str) -> ModelSpec:
    """Look up a zoo model by full name or by its short prefix (``"M3"``)."""
    key = _ALIASES.get(name, name)
    if key not in BUILTIN_MODELS:
        raise InvalidArgumentError(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}")
    return BUILTIN_MODELS[key]()


def model_from_config(spec) -> ModelSpec:
    """Build a model from a zoo name or a dict of expression strings.

    A custom model dict has keys ``n``, ``d``, ``x0`` (optional, zeros),
    ``sigma`` (n rows of d expressions), ``b`` (n expressions) and optionally
    ``lipschitz_K``. Expressions may use ``t`` and ``x1..xn`` (current state).
    """
    if isinstance(spec, str):
        return builtin_model(spec)
    if not isinstance(spec, dict):
        raise ConfigError("model must be a name or an object", location="model")
    try:
        n, d = int(spec["n"]), int(spec["d"])
        rows = spec["sigma"]
        drift = spec.get("b", ["0"] * n)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"custom model needs integer n, d and a sigma matrix ({exc})", location="model") from None
    allowed = ["t"] + state_names(n)
    if len(rows) != n or any(len(r) != d for r in rows):
        raise ConfigError(f"sigma must be {n} rows of {d} expressions", location="model.sigma")
    if len(drift) != n:
        raise ConfigError(f"b must have {n} expressions", location="model.b")
    sig_exprs = [[parse_scalar(e, allowed) for e in row] for row in rows]
    b_exprs = [parse_scalar(e, allowed) for e in drift]

    def env_of(t, hist):
        env = {f"x{i + 1}": hist[:, -1, i] for i in range(n)}
        env["t"] = t
        return env

    def sigma(t, hist):
        env = env_of(t, hist)
        m = hist.shape[0]
        out = np.empty((m, n, d))
        for i in range(n):
            for j in range(d):
                out[:, i, j] = sig_exprs[i][j](env)
        return out

    def b(t, hist):
        env = env_of(t, hist)
        out = np.empty((hist.shape[0], n))
        for i in range(n):
            out[:, i] = b_exprs[i](env)
        return out

    x0 = spec.get("x0", [0.0] * n)
    k = spec.get("lipschitz_K")
    return ModelSpec(n, d, x0, sigma, b, None if k is None else float(k),
                     spec.get("name", "custom"), config=dict(spec))


def lipschitz_gap(model: ModelSpec, t, hist_a, hist_b):
    """Per-pair ``(|sigma_a - sigma_b|, |b_a - b_b|, sup_s |xi_s - eta_s|)``.

    Norms are Frobenius for sigma, Euclidean for b and the state.
    """
    ds = np.linalg.norm(model.eval_sigma(t, hist_a) - model.eval_sigma(t, hist_b), axis=(1, 2))
    db = np.linalg.norm(model.eval_b(t, hist_a) - model.eval_b(t, hist_b), axis=1)
    dx = np.linalg.norm(hist_a - hist_b, axis=2).max(axis=1)
    return ds, db, dx
