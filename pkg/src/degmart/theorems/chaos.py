"""Truncated chaos expansion against the projected martingale.

``F - E[F]`` is regressed on iterated integrals of ``dm = P dB`` of orders
``1..q`` whose kernels are constant on products of coarse time blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..condexp import MIN_PATHS_PER_FEATURE
from ..exceptions import InvalidArgumentError, NumericalError
from ..ito import MAX_ORDER, SimplexKernel, block_edges, block_iterated_features
from ..models import ModelSpec
from ..paths import TimeGrid
from ..projection import DEFAULT_RANK_TOL, projector_path
from ..simulate import simulate
from .functionals import PathBundle

DEFAULT_BLOCKS = 8


class ChaosExpansion(RegressorMixin, BaseEstimator):
    """Least-squares block kernels of a functional of the driver increments.

    Parameters
    ----------
    max_order : int
        Highest chaos order fitted (at most 3).
    n_blocks : int
        Number of time blocks the kernels are constant on.

    Notes
    -----
    ``fit(dm, y)`` with ``dm`` of shape ``(M, N, d)``. Components of ``dm``
    that vanish on every path carry no features.
    """

    def __init__(self, max_order=2, n_blocks=DEFAULT_BLOCKS):
        self.max_order = max_order
        self.n_blocks = n_blocks

    def _features(self, dm):
        return block_iterated_features(dm, self.edges_, int(self.max_order), self.components_)

    def fit(self, dm, y):
        dm = np.asarray(dm, dtype=float)
        y = np.asarray(y, dtype=float)
        if not 1 <= int(self.max_order) <= MAX_ORDER:
            raise InvalidArgumentError(f"max_order must be between 1 and {MAX_ORDER}")
        if dm.ndim != 3 or y.shape != (dm.shape[0],):
            raise InvalidArgumentError(f"expected dm (M, N, d) and y (M,), got {dm.shape} and {y.shape}")
        m, n_steps, d = dm.shape
        self.n_steps_, self.dim_ = n_steps, d
        self.edges_ = block_edges(n_steps, int(self.n_blocks))
        self.components_ = [j for j in range(d) if np.any(dm[:, :, j])]
        if not self.components_:
            self.components_ = [0]
        feats, labels = self._features(dm)
        n_feat = sum(f.shape[1] for f in feats)
        if m < MIN_PATHS_PER_FEATURE * (n_feat + 1):
            raise InvalidArgumentError(f"{n_feat} chaos features need at least "
                                       f"{MIN_PATHS_PER_FEATURE * (n_feat + 1)} paths, got {m}")
        A = np.concatenate(feats, axis=1)
        self.labels_ = labels
        self.intercept_ = float(y.mean())
        yc = y - self.intercept_
        mean_a = A.mean(axis=0)
        A -= mean_a
        G = A.T @ A
        rhs = A.T @ yc
        sizes = np.cumsum([0] + [f.shape[1] for f in feats])
        self.residual_std_by_order_ = []
        coef = None
        for q in range(1, len(feats) + 1):
            cut = sizes[q]
            coef, cho = self._solve(G[:cut, :cut], rhs[:cut])
            resid = yc - A[:, :cut] @ coef
            self.residual_std_by_order_.append(float(np.std(resid, ddof=1)))
        dof = max(m - len(coef) - 1, 1)
        s2 = float(resid @ resid) / dof
        cov_diag = np.diag(scipy.linalg.cho_solve(cho, np.eye(len(coef))))
        self.coef_ = [coef[sizes[q]:sizes[q + 1]] for q in range(len(feats))]
        self.std_error_ = [np.sqrt(s2 * cov_diag[sizes[q]:sizes[q + 1]]) for q in range(len(feats))]
        self.feature_mean_ = mean_a
        self.residual_ = resid
        self.target_std_ = float(np.std(y, ddof=1))
        return self

    @staticmethod
    def _solve(G, rhs):
        try:
            cho = scipy.linalg.cho_factor(G)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            raise NumericalError("chaos design is singular; use fewer blocks or a lower order") from None
        return scipy.linalg.cho_solve(cho, rhs), cho

    @property
    def residual_std(self) -> float:
        check_is_fitted(self, "coef_")
        return self.residual_std_by_order_[-1]

    def kernels(self) -> List[SimplexKernel]:
        """One :class:`SimplexKernel` per order (coefficients on grid cells)."""
        check_is_fitted(self, "coef_")
        return [SimplexKernel.from_blocks(dict(zip(self.labels_[q], self.coef_[q])), self.edges_,
                                          self.n_steps_, self.dim_, q + 1)
                for q in range(len(self.coef_))]

    def predict(self, dm):
        check_is_fitted(self, "coef_")
        feats, _ = self._features(np.asarray(dm, dtype=float))
        A = np.concatenate(feats, axis=1) - self.feature_mean_
        return self.intercept_ + A @ np.concatenate(self.coef_)


@dataclass
class ChaosResult:
    """Fitted block kernels with standard errors and residual diagnostics.

    ``kernels`` expands the block coefficients onto grid cells on access
    (``N^q d^q`` numbers per order).
    """

    residual: float
    target_std: float
    residual_by_order: List[float]
    mean: float
    labels: list = field(repr=False)
    block_coefficients: List[np.ndarray] = field(repr=False)
    block_std_errors: List[np.ndarray] = field(repr=False)
    edges: np.ndarray = field(repr=False)
    components: List[int] = field(default_factory=list)
    dim: int = 1

    @property
    def kernels(self) -> List[SimplexKernel]:
        n_steps = int(self.edges[-1])
        return [SimplexKernel.from_blocks(dict(zip(labs, coef)), self.edges, n_steps, self.dim, q + 1)
                for q, (labs, coef) in enumerate(zip(self.labels, self.block_coefficients))]

    def first_order_profile(self) -> np.ndarray:
        """Order-1 block coefficients as ``(n_blocks, d)``, blocks in time order."""
        out = np.zeros((len(self.edges) - 1, self.dim))
        for ((b,), (j,)), c in zip(self.labels[0], self.block_coefficients[0]):
            out[b, j] = c
        return out

    @property
    def residual_fraction(self) -> float:
        return self.residual / self.target_std if self.target_std > 0 else 0.0

    def diagnostics(self) -> dict:
        return {
            "mean": self.mean,
            "residual_std": self.residual,
            "target_std": self.target_std,
            "residual_by_order": self.residual_by_order,
            "edges": self.edges.tolist(),
            "components": self.components,
            "kernels": [
                [{"blocks": list(bt), "components": list(ct), "value": float(c), "std_error": float(s)}
                 for (bt, ct), c, s in zip(labs, coef, se)]
                for labs, coef, se in zip(self.labels, self.block_coefficients, self.block_std_errors)
            ],
        }


def chaos_expand(F: Callable[[PathBundle], np.ndarray], model: ModelSpec, grid: TimeGrid, n_paths: int,
                 max_order: int = 2, *, n_blocks: int = DEFAULT_BLOCKS, seed: int = 0,
                 rank_tol: float = DEFAULT_RANK_TOL, n_jobs: int = 1) -> ChaosResult:
    """Block-kernel chaos expansion of ``F(X)`` up to ``max_order``."""
    B, X = simulate(model, grid, n_paths, seed, n_jobs=n_jobs)
    P = projector_path(model, X, grid, rank_tol)
    y = np.asarray(F(PathBundle(X, B, P=P)), dtype=float)
    dm = P.apply(B.increments)
    est = ChaosExpansion(max_order, n_blocks).fit(dm, y)
    return ChaosResult(
        residual=est.residual_std,
        target_std=est.target_std_,
        residual_by_order=est.residual_std_by_order_,
        mean=est.intercept_,
        labels=est.labels_,
        block_coefficients=est.coef_,
        block_std_errors=est.std_error_,
        edges=est.edges_,
        components=est.components_,
        dim=est.dim_,
    )
