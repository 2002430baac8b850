"""The n-particle sticky system that approximates the gas.

``n`` independent two-sided sticky Brownian motions with stickiness
``theta_n = (lambda0/n, lambda1/n)``.  Particles sitting at an endpoint are
invisible; the ones in the interior form a configuration that converges in
law to the gas as ``n`` grows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import io
from .analytic import ReservoirParams, StickyParams
from .configuration import Configuration
from .errors import CapacityError, DomainError
from .paths import Path, RngLike, RngStream, TimeGrid, as_generator, sticky_batch

REPLICA_BATCH_PATHS = 50_000


@dataclass(frozen=True)
class TriangularArray:
    """Initial data: ``interior`` positions plus particles parked at 0 and 1."""

    n: int
    interior: np.ndarray
    n_at_zero: int
    n_at_one: int

    def __post_init__(self):
        interior = np.sort(np.asarray(self.interior, dtype=float))
        object.__setattr__(self, "interior", interior)
        if interior.size + self.n_at_zero + self.n_at_one != self.n:
            raise DomainError("array sizes must add up to n")

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([self.interior, np.zeros(self.n_at_zero), np.ones(self.n_at_one)])


def default_a_n(n: int) -> float:
    return min(n ** -0.5, 0.49)


def build_initial_array(omega: Configuration, n: int, a_n: Optional[float] = None) -> TriangularArray:
    """Keep the particles of ``omega`` in ``(a_n, 1 - a_n)``; split the rest between the ends.

    ``floor((n - A)/2)`` start at 0 and the remainder at 1.  ``a_n``
    defaults to ``n**-0.5``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    a_n = default_a_n(n) if a_n is None else a_n
    if not 0 < a_n < 0.5:
        raise DomainError(f"a_n must lie in (0, 1/2), got {a_n!r}")
    p = omega.positions
    interior = p[(p > a_n) & (p < 1 - a_n)]
    if interior.size > n:
        raise CapacityError(f"{interior.size} interior particles exceed n={n}")
    rest = n - interior.size
    return TriangularArray(n, interior, rest // 2, rest - rest // 2)


def system_theta(params: ReservoirParams, n: int) -> StickyParams:
    if params.lambda0 <= 0 or params.lambda1 <= 0:
        raise DomainError("the sticky system needs lambda0 > 0 and lambda1 > 0")
    return StickyParams(params.lambda0 / n, params.lambda1 / n)


def simulate_system(rng: RngLike, params: ReservoirParams, array: TriangularArray,
                    grid: TimeGrid, **kwargs) -> list:
    """``n`` independent sticky paths started from ``array``."""
    theta = system_theta(params, array.n)
    vals, _ = sticky_batch(as_generator(rng), theta, array.starts, grid, **kwargs)
    return [Path(grid, row) for row in vals]


def _values_at(paths, t: float) -> np.ndarray:
    if not paths:
        return np.empty(0)
    k = paths[0].grid.index_of(t)
    return np.array([p.values[k] for p in paths])


def interior_counts(values: np.ndarray, bins) -> np.ndarray:
    """Per-bin counts of values strictly inside (0, 1)."""
    edges = np.asarray(bins, dtype=float)
    v = np.asarray(values)
    v = v[(v > 0) & (v < 1)]
    return np.histogram(v, bins=edges)[0]


def empirical_counts(paths: Sequence[Path], t: float, bins) -> list:
    """Counts per bin of the paths strictly inside (0, 1) at grid time ``t``."""
    return interior_counts(_values_at(list(paths), t), bins).tolist()


@dataclass(frozen=True, eq=False)
class ReplicaCounts:
    """Bin counts of many independent replicas of the system at one time."""

    n: int
    t: float
    edges: np.ndarray
    counts: np.ndarray    # (replicas, bins)
    at_zero: np.ndarray   # (replicas,)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_csv(self, path) -> None:
        rows = ((r, b, int(self.counts[r, b]))
                for r in range(self.counts.shape[0]) for b in range(self.counts.shape[1]))
        io.write_csv(path, ["replica", "bin", "count"], rows)


def simulate_replicas(rng: RngStream, params: ReservoirParams, array: TriangularArray,
                      t: float, n_replicas: int, bins=(0.0, 0.25, 0.5, 0.75, 1.0),
                      batch_paths: int = REPLICA_BATCH_PATHS, **kwargs) -> ReplicaCounts:
    """Interior bin counts at time ``t`` for ``n_replicas`` independent systems.

    Replicas are grouped in fixed batches; batch ``b`` draws from
    ``rng.child(b)``, so results do not depend on how batches are scheduled.
    """
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t!r}")
    theta = system_theta(params, array.n)
    edges = np.asarray(bins, dtype=float)
    per = max(1, batch_paths // array.n)
    grid = TimeGrid(0.0, float(t), 1)
    counts = np.zeros((n_replicas, edges.size - 1), dtype=np.int64)
    at_zero = np.zeros(n_replicas, dtype=np.int64)
    starts = array.starts
    for b, lo in enumerate(range(0, n_replicas, per)):
        m = min(per, n_replicas - lo)
        vals, _ = sticky_batch(rng.child(b).generator(), theta, np.tile(starts, m), grid, **kwargs)
        final = vals[:, -1].reshape(m, array.n)
        for r in range(m):
            counts[lo + r] = interior_counts(final[r], edges)
        at_zero[lo:lo + m] = np.count_nonzero(final == 0.0, axis=1)
    return ReplicaCounts(array.n, float(t), edges, counts, at_zero)
