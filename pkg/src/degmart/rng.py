"""Counter-based per-path random streams.

Every path owns a disjoint, fixed-size block of Philox counters keyed by the
experiment seed, so a variate is fully determined by ``(seed, path index,
draw index)``. Blocks of paths can be generated in any order or in parallel
and concatenated without changing a single bit.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .exceptions import InvalidArgumentError

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngSpec:
    """Seed plus the stream id (path index) of the first path in a batch."""

    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _SEED_MASK:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise InvalidArgumentError("stream_id must be non-negative")


def _uniform_open(raw):
    # 53 high bits, shifted by half an ulp: strictly inside (0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _block(seed, first, count, per_path):
    counters = -(-per_path // 4)
    gen = np.random.Philox(key=seed)
    if first:
        gen.advance(first * counters)
    raw = gen.random_raw(count * counters * 4).reshape(count, counters * 4)
    return ndtri(_uniform_open(raw[:, :per_path]))


def standard_normals(seed, first_path, n_paths, per_path, *, n_jobs=1, block_size=8192):
    """Standard normal draws of shape ``(n_paths, per_path)``.

    Row ``i`` is stream ``first_path + i``; its values do not depend on
    ``n_paths``, ``n_jobs`` or ``block_size``.
    """
    if n_paths < 0 or per_path < 1:
        raise InvalidArgumentError("need n_paths >= 0 and per_path >= 1")
    starts = list(range(0, n_paths, block_size))
    args = [(seed, first_path + s, min(block_size, n_paths - s), per_path) for s in starts]
    if n_jobs > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda a: _block(*a), args))
    else:
        parts = [_block(*a) for a in args]
    if not parts:
        return np.empty((0, per_path))
    return np.concatenate(parts, axis=0)
