"""Discrete Ito integrals, Wick exponentials and iterated integrals.

All integrands are evaluated at the left endpoint of each grid cell.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvalidArgumentError
from .paths import BrownianPath, CameronMartinFn
from .projection import ProjectorSequence
from .simulate import safe_exp

MAX_ORDER = 3


def _increments(B):
    return B.increments if isinstance(B, BrownianPath) else np.asarray(B, dtype=float)


def ito_integral(xi, B) -> np.ndarray:
    """``sum_k xi_k . dB_k`` per path; ``xi`` is ``(M, N, d)`` or deterministic ``(N, d)``."""
    dB = _increments(B)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != dB.shape and xi.shape != dB.shape[1:]:
        raise InvalidArgumentError(f"integrand shape {xi.shape} does not match increments {dB.shape}")
    if xi.ndim == 2:
        return np.einsum("kj,mkj->m", xi, dB)
    return np.einsum("mkj,mkj->m", xi, dB)


def projected_increments(P: ProjectorSequence, B) -> np.ndarray:
    """``dm_k = P_k dB_k``, shape ``(M, N, d)``."""
    dB = _increments(B)
    if P.mats.shape[:3] != dB.shape[:2] + (dB.shape[2],):
        raise InvalidArgumentError(f"projectors {P.mats.shape} do not match increments {dB.shape}")
    return P.apply(dB)


def log_wick(hdot, dB, dt) -> np.ndarray:
    """``sum hdot.dB - 1/2 sum |hdot|^2 dt`` for deterministic or per-path ``hdot``."""
    if hdot.ndim == 2:
        return np.einsum("kj,mkj->m", hdot, dB) - 0.5 * np.sum(hdot**2) * dt
    return np.einsum("mkj,mkj->m", hdot, dB) - 0.5 * np.einsum("mkj,mkj->m", hdot, hdot) * dt


def wick_exponential(h: CameronMartinFn, B: BrownianPath) -> np.ndarray:
    """``exp(sum hdot_k.dB_k - |h|_H^2 / 2)`` per path."""
    if h.hdot.shape != B.increments.shape[1:]:
        raise InvalidArgumentError(f"h has shape {h.hdot.shape}, increments {B.increments.shape[1:]}")
    return safe_exp(log_wick(h.hdot, B.increments, B.grid.dt), "Wick exponential")


def log_projected_wick(h: CameronMartinFn, P: ProjectorSequence, B: BrownianPath) -> np.ndarray:
    if h.hdot.shape != B.increments.shape[1:]:
        raise InvalidArgumentError(f"h has shape {h.hdot.shape}, increments {B.increments.shape[1:]}")
    ph = P.apply(h.hdot)
    return log_wick(ph, B.increments, B.grid.dt)


def projected_wick(h: CameronMartinFn, P: ProjectorSequence, B: BrownianPath) -> np.ndarray:
    """``exp(sum (P_k hdot_k).dB_k - 1/2 sum |P_k hdot_k|^2 dt)`` per path.

    Since ``hdot . P dB = P hdot . dB`` this is the Wick exponential of ``h``
    taken against ``dm = P dB``.
    """
    return safe_exp(log_projected_wick(h, P, B), "projected Wick exponential")


# --------------------------------------------------------------------------
# iterated integrals


def block_edges(n_steps: int, n_blocks: int) -> np.ndarray:
    """Boundaries of ``n_blocks`` near-equal runs of grid cells."""
    if not 1 <= n_blocks <= n_steps:
        raise InvalidArgumentError(f"need 1 <= n_blocks <= n_steps, got {n_blocks} blocks for {n_steps} steps")
    return np.round(np.linspace(0, n_steps, n_blocks + 1)).astype(int)


def simplex_index(n_blocks: int, dim: int, order: int, components: Optional[Sequence[int]] = None):
    """Feature labels ``(block tuple, component tuple)`` of one order.

    Block tuples are weakly decreasing (cells in the same block still have to
    be strictly ordered); components range over ``components``.
    """
    comps = list(range(dim)) if components is None else list(components)
    blocks = [bt for bt in itertools.product(range(n_blocks - 1, -1, -1), repeat=order)
              if all(bt[i] >= bt[i + 1] for i in range(order - 1))]
    return [(bt, ct) for bt in blocks for ct in itertools.product(comps, repeat=order)]


def block_iterated_features(dm, edges, max_order: int, components=None):
    """Iterated integrals of ``dm`` over block-indicator kernels.

    Feature ``((b_1..b_q), (j_1..j_q))`` is
    ``sum_{k_1 > ... > k_q, k_i in block b_i} dm[k_1, j_1] ... dm[k_q, j_q]``,
    accumulated by a forward pass over the grid. Cost is one vector update
    per feature per step.

    Returns
    -------
    features : list of ndarray, one ``(M, F_q)`` array per order
    labels : list of label lists
    """
    dm = np.asarray(dm, dtype=float)
    m, n_steps, d = dm.shape
    if not 1 <= max_order <= MAX_ORDER:
        raise InvalidArgumentError(f"order must be between 1 and {MAX_ORDER}")
    edges = np.asarray(edges)
    nb = len(edges) - 1
    block_of = np.searchsorted(edges, np.arange(n_steps), side="right") - 1
    labels = [simplex_index(nb, d, q, components) for q in range(1, max_order + 1)]
    pos = [{lab: i for i, lab in enumerate(labs)} for labs in labels]
    running = [np.zeros((m, len(labs))) for labs in labels]
    # per order and block b: rows whose leading block is b, their leading
    # component, and the position of the tail label one order down
    plan = []
    for q, labs in enumerate(labels, start=1):
        per_block = []
        for b in range(nb):
            rows = [i for i, (bt, ct) in enumerate(labs) if bt[0] == b]
            lead = np.array([labs[i][1][0] for i in rows], dtype=int)
            if q == 1:
                tail = None
            else:
                tail = np.array([pos[q - 2][(labs[i][0][1:], labs[i][1][1:])] for i in rows], dtype=int)
            per_block.append((np.array(rows, dtype=int), lead, tail))
        plan.append(per_block)
    for k in range(n_steps):
        b = block_of[k]
        step = dm[:, k]
        for q in range(max_order, 0, -1):
            rows, lead, tail = plan[q - 1][b]
            if rows.size == 0:
                continue
            if q == 1:
                running[0][:, rows] += step[:, lead]
            else:
                # tail sums still exclude step k: strict ordering
                running[q - 1][:, rows] += step[:, lead] * running[q - 2][:, tail]
    return running, labels


@dataclass(frozen=True, eq=False)
class SimplexKernel:
    """Kernel ``f(k_1, ..., k_q)`` in ``(R^d)^{(x) q}`` on the grid-cell simplex.

    ``coeffs`` has shape ``(N,)*q + (d,)*q``; only strictly decreasing cell
    tuples ``k_1 > ... > k_q`` may carry nonzero entries. When the kernel was
    built from block coefficients, ``edges`` and ``block_coeffs`` are kept so
    it can be evaluated with the blocked forward recursion.
    """

    coeffs: np.ndarray
    edges: Optional[np.ndarray] = None
    block_coeffs: Optional[dict] = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        q = c.ndim // 2
        if c.ndim % 2 or q < 1 or len(set(c.shape[:q])) != 1 or len(set(c.shape[q:])) != 1:
            raise InvalidArgumentError(f"coeffs must have shape (N,)*q + (d,)*q, got {c.shape}")
        if np.any(c[~simplex_mask(c.shape[0], q)]):
            raise InvalidArgumentError("kernel has mass off the strict simplex k_1 > ... > k_q")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.ndim // 2

    @property
    def n_steps(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[-1]

    @classmethod
    def from_blocks(cls, block_coeffs: dict, edges, n_steps: int, dim: int, order: int) -> "SimplexKernel":
        """Expand ``{(block tuple, component tuple): value}`` onto grid cells."""
        edges = np.asarray(edges)
        block_of = np.searchsorted(edges, np.arange(n_steps), side="right") - 1
        coeffs = np.zeros((n_steps,) * order + (dim,) * order)
        mask = simplex_mask(n_steps, order)
        for (bt, ct), value in block_coeffs.items():
            sel = mask.copy()
            for axis, bb in enumerate(bt):
                shape = [1] * order
                shape[axis] = n_steps
                sel &= (block_of == bb).reshape(shape)
            coeffs[(sel,) + tuple(ct)] = value
        return cls(coeffs, edges, dict(block_coeffs))

    def to_json(self) -> str:
        return json.dumps({
            "order": self.order,
            "n_steps": self.n_steps,
            "dim": self.dim,
            "coefficients": self.coeffs.ravel(order="C").tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "SimplexKernel":
        try:
            obj = json.loads(text)
            q, n, d = int(obj["order"]), int(obj["n_steps"]), int(obj["dim"])
            flat = np.asarray(obj["coefficients"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed kernel file: {exc}") from None
        shape = (n,) * q + (d,) * q
        if flat.size != int(np.prod(shape)):
            raise InvalidArgumentError(f"kernel file has {flat.size} coefficients, expected {int(np.prod(shape))}")
        return cls(flat.reshape(shape))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "SimplexKernel":
        with open(path) as fh:
            return cls.from_json(fh.read())


def simplex_mask(n_steps: int, order: int) -> np.ndarray:
    """Boolean ``(N,)*q`` mask of strictly decreasing index tuples."""
    idx = np.indices((n_steps,) * order)
    mask = np.ones((n_steps,) * order, dtype=bool)
    for i in range(order - 1):
        mask &= idx[i] > idx[i + 1]
    return mask


def iterated_integral(f: SimplexKernel, dm, *, max_order: int = MAX_ORDER, chunk: int = 4096) -> np.ndarray:
    """``sum_{k_1 > ... > k_q} <f(k_1..k_q), dm_{k_1} (x) ... (x) dm_{k_q}>`` per path.

    Block-built kernels use the blocked forward recursion; general dense
    kernels are contracted one time index at a time (``O(N^q d^q)`` per path).
    """
    dm = np.asarray(dm, dtype=float)
    if dm.ndim == 2:
        dm = dm[None]
    if f.order > max_order:
        raise InvalidArgumentError(f"kernel order {f.order} exceeds the maximum {max_order}")
    m, n_steps, d = dm.shape
    if (n_steps, d) != (f.n_steps, f.dim):
        raise InvalidArgumentError(f"kernel on {f.n_steps} steps x {f.dim} dims, increments {dm.shape}")
    q = f.order
    if f.block_coeffs is not None:
        feats, labels = block_iterated_features(dm, f.edges, q)
        weights = np.array([f.block_coeffs.get(lab, 0.0) for lab in labels[q - 1]])
        return feats[q - 1] @ weights
    # reorder to (k1, j1, k2, j2, ...) and flatten pairs
    perm = [ax for i in range(q) for ax in (i, q + i)]
    tensor = f.coeffs.transpose(perm).reshape((n_steps * d,) * q)
    flat = dm.reshape(m, n_steps * d)
    out = np.empty(m)
    for start in range(0, m, chunk):
        part = flat[start:start + chunk]
        acc = np.tensordot(part, tensor, axes=([1], [0]))
        for _ in range(q - 1):
            acc = np.einsum("ci...,ci->c...", acc, part)
        out[start:start + chunk] = acc
    return out
