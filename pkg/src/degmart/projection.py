"""Orthogonal projector onto the range of ``sigma^T`` along solution paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .models import ModelSpec
from .paths import StatePath, TimeGrid

DEFAULT_RANK_TOL = 1e-10


def _check_tol(rank_tol):
    if not rank_tol > 0:
        raise InvalidArgumentError(f"rank_tol must be positive, got {rank_tol}")


def projector(sigma, rank_tol: float = DEFAULT_RANK_TOL):
    """Projector of R^d onto ``range(sigma^T)`` and its rank.

    Parameters
    ----------
    sigma : array_like, shape (n, d)
    rank_tol : float
        Singular values at or below ``rank_tol * s_max`` count as zero.

    Returns
    -------
    P : ndarray, shape (d, d)
        ``V_r V_r^T`` for the leading right singular vectors ``V_r``.
    rank : int
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if not np.all(np.isfinite(sigma)):
        raise InvalidArgumentError("sigma must be finite")
    _check_tol(rank_tol)
    mats, ranks = batch_projector(sigma[None], rank_tol)
    return mats[0], int(ranks[0])


def batch_projector(sigmas, rank_tol: float = DEFAULT_RANK_TOL):
    """Vectorized :func:`projector` over a stack ``(M, n, d)``."""
    sigmas = np.asarray(sigmas, dtype=float)
    m, n, d = sigmas.shape
    if n == 1:
        # one row: P = v v^T / |v|^2, the SVD projector in closed form
        v = sigmas[:, 0, :]
        norm2 = np.einsum("mj,mj->m", v, v)
        rank = (norm2 > 0).astype(int)
        scale = np.divide(1.0, norm2, out=np.zeros_like(norm2), where=norm2 > 0)
        return np.einsum("mi,mj->mij", v, v) * scale[:, None, None], rank
    _, s, vh = np.linalg.svd(sigmas, full_matrices=True)
    smax = s[:, :1] if s.shape[1] else np.zeros((m, 1))
    keep = (s > rank_tol * smax) & (smax > 0)
    rank = keep.sum(axis=1)
    vr = vh[:, : s.shape[1], :] * keep[:, :, None]
    return np.einsum("mri,mrj->mij", vr, vr), rank


@dataclass(frozen=True, eq=False)
class ProjectorSequence:
    """Per-path, per-cell projectors ``mats[m, k]`` of shape ``(d, d)``."""

    mats: np.ndarray
    ranks: np.ndarray

    @property
    def n_paths(self):
        return self.mats.shape[0]

    @property
    def n_steps(self):
        return self.mats.shape[1]

    def rank_changes(self) -> np.ndarray:
        """Number of rank jumps along each path."""
        return np.count_nonzero(np.diff(self.ranks, axis=1), axis=1)

    @property
    def is_path_independent(self) -> bool:
        return self.mats.strides[0] == 0

    def subset(self, mask) -> "ProjectorSequence":
        if self.is_path_independent:
            count = int(np.count_nonzero(mask)) if np.asarray(mask).dtype == bool else len(mask)
            return ProjectorSequence(np.broadcast_to(self.mats[0], (count,) + self.mats.shape[1:]),
                                     np.broadcast_to(self.ranks[0], (count,) + self.ranks.shape[1:]))
        return ProjectorSequence(self.mats[mask], self.ranks[mask])

    @classmethod
    def identity(cls, n_paths, n_steps, d) -> "ProjectorSequence":
        mats = np.broadcast_to(np.eye(d), (n_paths, n_steps, d, d))
        return cls(mats, np.full((n_paths, n_steps), d))

    def apply(self, vecs) -> np.ndarray:
        """``P_k v_k`` for ``vecs`` of shape ``(M, N, d)`` or ``(N, d)``."""
        vecs = np.asarray(vecs, dtype=float)
        if vecs.ndim == 2:
            if self.is_path_independent:
                return np.broadcast_to(np.einsum("kij,kj->ki", self.mats[0], vecs), (self.n_paths,) + vecs.shape)
            return np.einsum("mkij,kj->mki", self.mats, vecs)
        if self.is_path_independent:
            return np.einsum("kij,mkj->mki", self.mats[0], vecs)
        return np.einsum("mkij,mkj->mki", self.mats, vecs)


def projector_path(model: ModelSpec, X: StatePath, grid: TimeGrid = None,
                   rank_tol: float = DEFAULT_RANK_TOL) -> ProjectorSequence:
    """``P_k = projector(sigma(t_k, X_{<=k}))`` for every cell of every path."""
    _check_tol(rank_tol)
    grid = grid or X.grid
    if X.dim != model.n:
        raise InvalidArgumentError(f"state dimension {X.dim} does not match model n={model.n}")
    m, d = X.n_paths, model.d
    per_step = []
    for k in range(grid.n_steps):
        sig = model.eval_sigma(grid.times[k], X.history(k))
        if np.array_equal(sig, np.broadcast_to(sig[0], sig.shape)):
            p, r = batch_projector(sig[:1], rank_tol)
        else:
            p, r = batch_projector(sig, rank_tol)
            if np.array_equal(p, np.broadcast_to(p[0], p.shape)) and np.all(r == r[0]):
                p, r = p[:1], r[:1]
        per_step.append((p, r))
    if all(p.shape[0] == 1 for p, _ in per_step):
        # path-independent projectors: keep one copy per step, broadcast over paths
        mats = np.broadcast_to(np.stack([p[0] for p, _ in per_step]), (m, grid.n_steps, d, d))
        ranks = np.broadcast_to(np.array([r[0] for _, r in per_step]), (m, grid.n_steps))
        return ProjectorSequence(mats, ranks)
    mats = np.empty((m, grid.n_steps, d, d))
    ranks = np.empty((m, grid.n_steps), dtype=int)
    for k, (p, r) in enumerate(per_step):
        mats[:, k], ranks[:, k] = p, r
    return ProjectorSequence(mats, ranks)
