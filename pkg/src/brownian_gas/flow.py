"""Net particle flow through a point, measured with tokens.

A particle receives a minus token when it crosses ``x - eps`` and a plus
token when it crosses ``x + eps``; only a change of token moves the
counter (+1 for minus to plus, -1 for plus to minus).  Particles already
inside the band at the starting time carry a neutral token and never count.
As ``eps`` shrinks the counter settles on the net number of crossings of
``x`` by particles that cross it completely.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ResolutionError, StabilizationError, UnmarkedTrajectoryError
from .gas import WindowSimulation

DEFAULT_EPSILONS = tuple(0.02 * 2.0 ** -j for j in range(7))
RESOLUTION_FACTOR = 10.0


class TokenState(Enum):
    NONE = "none"
    MINUS = "minus"
    PLUS = "plus"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class Conversion:
    trajectory_id: int
    time: float
    sign: int


@dataclass(frozen=True, eq=False)
class FlowTrace:
    """Right-continuous integer path of the token counter.

    ``jump_times`` are sorted; ties between trajectories, which have
    probability zero, are ordered by trajectory id.
    """

    x: float
    epsilon: float
    t_start: float
    t_end: float
    jump_times: np.ndarray
    jump_signs: np.ndarray
    jump_ids: np.ndarray
    final_tokens: dict = field(default_factory=dict)

    def value(self, t) -> np.ndarray:
        """Counter value at time(s) ``t``."""
        cum = np.concatenate([[0], np.cumsum(self.jump_signs)])
        return cum[np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")]

    @property
    def final(self) -> int:
        return int(self.jump_signs.sum())

    @property
    def conversions(self) -> list:
        return [Conversion(int(i), float(t), int(s))
                for i, t, s in zip(self.jump_ids, self.jump_times, self.jump_signs)]

    def same_on(self, other: "FlowTrace", times) -> bool:
        return bool(np.array_equal(self.value(times), other.value(times)))

    def to_csv(self, path) -> None:
        """Rows ``t, J``: the starting value followed by one row per jump."""
        cum = np.cumsum(self.jump_signs)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "J"])
            w.writerow([f"{self.t_start:.17g}", 0])
            for t, j in zip(self.jump_times, cum):
                w.writerow([f"{t:.17g}", int(j)])


def _check_band(sim: WindowSimulation, x: float, eps: float) -> None:
    if not eps > 0:
        raise DomainError(f"epsilon must be > 0, got {eps!r}")
    if not (sim.a <= x - eps and x + eps <= 1 - sim.a):
        raise DomainError(f"band ({x - eps}, {x + eps}) must lie inside [{sim.a}, {1 - sim.a}]")
    if sim.grid.dt > eps ** 2 / RESOLUTION_FACTOR:
        raise ResolutionError(f"dt={sim.grid.dt} too coarse for epsilon={eps}; "
                              f"need dt <= epsilon^2/{RESOLUTION_FACTOR:g}")


def _crossings(times: np.ndarray, vals: np.ndarray, level: float):
    d = vals - level
    # samples sitting exactly on the level are skipped, so a touch is not a
    # crossing and a crossing through a sample is seen once
    nz = np.flatnonzero(d != 0)
    ds = d[nz]
    k = nz[np.flatnonzero(ds[:-1] * ds[1:] < 0)]
    tc = times[k] + (level - vals[k]) / (vals[k + 1] - vals[k]) * (times[k + 1] - times[k])
    return k, tc


def _trajectory_events(times, vals, x, eps, initial: TokenState):
    """Counter jumps of one trajectory; ``initial`` is its token at the first sample."""
    if initial is TokenState.NEUTRAL or vals.size < 2:
        return np.empty(0), np.empty(0, dtype=np.int64), initial
    km, tm = _crossings(times, vals, x - eps)
    kp, tp = _crossings(times, vals, x + eps)
    if np.intersect1d(km, kp).size:
        raise ResolutionError("a single step crossed both booths")
    if km.size + kp.size == 0:
        return np.empty(0), np.empty(0, dtype=np.int64), initial
    k = np.concatenate([km, kp])
    tc = np.concatenate([tm, tp])
    lv = np.concatenate([np.zeros(km.size, dtype=np.int64), np.ones(kp.size, dtype=np.int64)])
    order = np.argsort(k, kind="stable")
    tc, lv = tc[order], lv[order]
    # repeated crossings of the same booth leave the token unchanged
    keep = np.concatenate([[True], lv[1:] != lv[:-1]])
    tc, lv = tc[keep], lv[keep]
    if initial is TokenState.MINUS and lv[0] == 0 or initial is TokenState.PLUS and lv[0] == 1:
        start = 1
    elif initial is TokenState.NONE:
        start = 1
    else:
        start = 0
    jt = tc[start:]
    js = np.where(lv[start:] == 1, 1, -1)
    final = TokenState.PLUS if lv[-1] == 1 else TokenState.MINUS
    return jt, js, final


def run_token_counter(sim: WindowSimulation, x: float, eps: float,
                      t_start: Optional[float] = None, t_end: Optional[float] = None) -> FlowTrace:
    """Token counter for the band ``(x - eps, x + eps)`` over ``[t_start, t_end]``.

    Crossing times are located by linear interpolation between samples.
    """
    _check_band(sim, x, eps)
    grid = sim.grid
    t_start = grid.t0 if t_start is None else t_start
    t_end = grid.t_end if t_end is None else t_end
    k0, k1 = grid.index_of(t_start), grid.index_of(t_end)
    dt = grid.dt
    all_t, all_s, all_i = [], [], []
    tokens = {}
    for i in range(len(sim)):
        fi = int(sim.first_index[i])
        vals = sim.values[i]
        last = fi + vals.size - 2               # global index of the last sample
        if last < k0 or sim.birth_times[i] > t_end:
            continue
        if sim.birth_times[i] > t_start:
            # born inside the horizon: the birth point opens the path
            j_hi = min(k1, last) - fi + 1
            v = vals[:j_hi + 1]
            tt = np.concatenate([[sim.birth_times[i]],
                                 grid.t0 + (fi + np.arange(j_hi)) * dt])
            x0 = v[0]
        else:
            j_lo, j_hi = k0 - fi + 1, min(k1, last) - fi + 1
            v = vals[j_lo:j_hi + 1]
            tt = grid.t0 + (k0 + np.arange(v.size)) * dt
            x0 = v[0]
        if not 0 < x0 < 1:
            continue
        init = TokenState.NEUTRAL if x - eps < x0 < x + eps else TokenState.NONE
        jt, js, fin = _trajectory_events(tt, v, x, eps, init)
        tokens[i] = fin
        if jt.size:
            all_t.append(jt)
            all_s.append(js)
            all_i.append(np.full(jt.size, i))
    if all_t:
        t_arr, s_arr, i_arr = (np.concatenate(a) for a in (all_t, all_s, all_i))
        order = np.lexsort((i_arr, t_arr))
        t_arr, s_arr, i_arr = t_arr[order], s_arr[order], i_arr[order]
    else:
        t_arr, s_arr, i_arr = np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return FlowTrace(x, eps, t_start, t_end, t_arr, s_arr, i_arr, tokens)


@dataclass(frozen=True, eq=False)
class FlowLimit:
    """Outcome of refining ``eps``: the trace at the reported ``epsilon``.

    ``stabilized`` is False when no two consecutive levels agreed; the trace
    is then the one at the finest level tried.
    """

    trace: FlowTrace
    epsilon: float
    stabilized: bool
    finals: tuple


def estimate_flow_limit(sim: WindowSimulation, x: float,
                        eps_sequence: Sequence[float] = DEFAULT_EPSILONS,
                        check_times=None, strict: bool = True) -> FlowLimit:
    """Refine ``eps`` until two consecutive levels give the same counter.

    Traces are compared at ``check_times`` (default: the end of the grid).
    The finer of the two agreeing levels is reported.  With ``strict`` a
    sequence that never settles raises ``StabilizationError``.
    """
    eps_sequence = sorted(eps_sequence, reverse=True)
    if not eps_sequence:
        raise DomainError("eps_sequence is empty")
    check = np.atleast_1d(sim.grid.t_end if check_times is None else check_times)
    prev = None
    finals = []
    for eps in eps_sequence:
        tr = run_token_counter(sim, x, eps)
        finals.append(tr.final)
        if prev is not None and tr.same_on(prev, check):
            return FlowLimit(tr, eps, True, tuple(finals))
        prev = tr
    if strict:
        raise StabilizationError("token counter did not stabilize", trace=prev,
                                 epsilon=eps_sequence[-1])
    return FlowLimit(prev, eps_sequence[-1], False, tuple(finals))


@dataclass(frozen=True, eq=False)
class FlowDecomposition:
    """``J(t) = N01(t) - N10(t) + R(t)`` on ``[t0, T]``.

    ``n01_times`` are births at ``a`` in the horizon that end at 1,
    ``n10_times`` births at ``1 - a`` that end at 0.
    """

    x: float
    horizon: float
    flow: FlowLimit
    n01_times: np.ndarray
    n10_times: np.ndarray

    def n01(self, t) -> np.ndarray:
        return np.searchsorted(self.n01_times, np.asarray(t, dtype=float), side="right")

    def n10(self, t) -> np.ndarray:
        return np.searchsorted(self.n10_times, np.asarray(t, dtype=float), side="right")

    def residual(self, t) -> np.ndarray:
        return self.flow.trace.value(t) - self.n01(t) + self.n10(t)

    def to_json(self, path=None) -> str:
        T = self.horizon
        doc = {
            "x": self.x,
            "horizon": T,
            "epsilon": self.flow.epsilon,
            "stabilized": self.flow.stabilized,
            "J": int(self.flow.trace.value(T)),
            "N01": int(self.n01(T)),
            "N10": int(self.n10(T)),
            "R": int(self.residual(T)),
            "n01_times": [float(f"{v:.17g}") for v in self.n01_times],
            "n10_times": [float(f"{v:.17g}") for v in self.n10_times],
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def flow_decomposition(sim: WindowSimulation, x: float,
                       eps_sequence: Sequence[float] = DEFAULT_EPSILONS,
                       strict: bool = False) -> FlowDecomposition:
    """Split the flow through ``x`` into crossing counts and a residual."""
    t0, T = sim.grid.t0, sim.grid.t_end
    inside = (sim.birth_times > t0) & (sim.birth_times <= T)
    if np.any(sim.marks[inside] < 0):
        raise UnmarkedTrajectoryError("a trajectory born in the horizon was never absorbed")
    entry = sim.entry
    n01 = np.sort(sim.birth_times[inside & (entry == 0) & (sim.marks == 1)])
    n10 = np.sort(sim.birth_times[inside & (entry == 1) & (sim.marks == 0)])
    fl = estimate_flow_limit(sim, x, eps_sequence, strict=strict)
    return FlowDecomposition(x, T, fl, n01, n10)
