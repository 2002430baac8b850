"""Finite particle configurations on (0, 1)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class Configuration:
    """A finite multiset of particle positions, stored sorted.

    Positions must lie strictly inside (0, 1).  Equality compares the sorted
    positions exactly.
    """

    positions: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        pos = np.sort(np.asarray(self.positions, dtype=float).ravel())
        if pos.size and not (np.all(pos > 0) and np.all(pos < 1)):
            raise DomainError("configuration positions must lie in (0, 1)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def empty(cls) -> "Configuration":
        return cls(np.empty(0))

    def __len__(self) -> int:
        return int(self.positions.size)

    def __iter__(self):
        return iter(self.positions.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.positions, other.positions)

    def __add__(self, other: "Configuration") -> "Configuration":
        return Configuration(np.concatenate([self.positions, other.positions]))

    def __repr__(self) -> str:
        return f"Configuration(n={len(self)})"

    def mass(self, weight=None) -> float:
        """Weighted mass ``sum_k w(x_k)``; default weight is ``x (1 - x)``."""
        if weight is None:
            return float(np.sum(self.positions * (1.0 - self.positions)))
        return float(np.sum(weight(self.positions)))

    def count_in(self, lo: float, hi: float, closed: bool = True) -> int:
        """Number of particles in ``[lo, hi]`` (or ``(lo, hi)`` if not ``closed``)."""
        p = self.positions
        if closed:
            return int(np.count_nonzero((p >= lo) & (p <= hi)))
        return int(np.count_nonzero((p > lo) & (p < hi)))

    def bin_counts(self, edges) -> np.ndarray:
        """Counts over the partition of (0, 1) given by ``edges``."""
        return np.histogram(self.positions, bins=np.asarray(edges, dtype=float))[0]

    def to_text(self) -> str:
        """One position per line with 17 significant digits."""
        return "".join(f"{x:.17g}\n" for x in self.positions)

    @classmethod
    def from_text(cls, text: str) -> "Configuration":
        vals = [float(line) for line in text.split() if line.strip()]
        return cls(np.array(vals, dtype=float))


def bin_count_matrix(configs: Iterable[Configuration], edges) -> np.ndarray:
    """Stack ``bin_counts`` of many configurations into a ``(n, bins)`` array."""
    edges = np.asarray(edges, dtype=float)
    return np.array([c.bin_counts(edges) for c in configs], dtype=np.int64).reshape(-1, edges.size - 1)
