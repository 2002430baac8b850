"""The boundary-driven Brownian gas.

Exact one-time samplers for the transition kernel, its stationary law and
the adjoint kernel, and the path-level window simulator in which particles
are born at ``a`` and ``1 - a`` and perform absorbed Brownian motions.

Only finite configurations are handled.  At positive times the gas has
finitely many particles almost surely, so nothing is lost for the samplers;
infinite initial configurations are outside the simulator's reach.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import analytic
from .analytic import ReservoirParams, SeriesControl, DEFAULT_CONTROL
from .configuration import Configuration
from .errors import DomainError
from .paths import (Envelope, Path, RngLike, TimeGrid, Absorption, absorbed_walk,
                    as_generator, sample_ppp_batch)

DEFAULT_T_BURN = 10.0


def _envelope_edges(t: float, n_uniform: int = 32) -> np.ndarray:
    # extra edges at the sqrt(t) scale, where the entrance intensity varies
    edges = [np.linspace(0.0, 1.0, n_uniform + 1)]
    if t < 1:
        near = math.sqrt(t) * np.array([0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
        near = near[near < 0.5]
        edges += [near, 1.0 - near]
    return np.unique(np.concatenate(edges))


def _hit_at_edges(endpoint, edges, t, ctl):
    # hitting probabilities on the closed interval: 1 at the endpoint itself
    inner = edges[1:-1]
    vals = np.asarray(analytic.hitting_prob(endpoint, inner, t, ctl)) if inner.size else np.empty(0)
    lo = 1.0 if endpoint == 0 else 0.0
    hi = 1.0 - lo
    return np.concatenate([[lo], vals, [hi]])


def entrance_envelope(params: ReservoirParams, t: float,
                      ctl: SeriesControl = DEFAULT_CONTROL) -> Envelope:
    """Piecewise-constant bound on the entrance intensity at time ``t``.

    ``P_x(tau_0 <= t)`` decreases in ``x`` and ``P_x(tau_1 <= t)`` increases,
    so each bin is bounded by evaluating them at the appropriate edge.
    """
    edges = _envelope_edges(t)
    h0 = _hit_at_edges(0, edges, t, ctl)
    h1 = _hit_at_edges(1, edges, t, ctl)
    heights = params.lambda0 * h0[:-1] + params.lambda1 * h1[1:]
    return Envelope(edges, heights * (1 + 1e-9) + 1e-15)


def dual_entrance_envelope(params: ReservoirParams, t: float,
                           ctl: SeriesControl = DEFAULT_CONTROL) -> Envelope:
    """Bound on ``bar_lambda(x) P_x(tau <= t)`` built the same way."""
    edges = _envelope_edges(t)
    h0 = _hit_at_edges(0, edges, t, ctl)
    h1 = _hit_at_edges(1, edges, t, ctl)
    lam_edge = params.lambda0 * (1 - edges) + params.lambda1 * edges
    lam_max = np.maximum(lam_edge[:-1], lam_edge[1:])
    heights = lam_max * np.minimum(1.0, h0[:-1] + h1[1:])
    return Envelope(edges, heights * (1 + 1e-9) + 1e-15)


def stationary_envelope(params: ReservoirParams) -> Envelope:
    edges = np.linspace(0.0, 1.0, 17)
    lam_edge = params.lambda0 * (1 - edges) + params.lambda1 * edges
    return Envelope(edges, np.maximum(lam_edge[:-1], lam_edge[1:]))


def _configs(arrays) -> list:
    return [Configuration(a) for a in arrays]


def sample_stationary_batch(rng: RngLike, params: ReservoirParams, n_draws: int) -> list:
    """``n_draws`` independent draws of the Poisson process with intensity ``bar_lambda``."""
    gen = as_generator(rng)
    if params.total == 0:
        return [Configuration.empty() for _ in range(n_draws)]
    return _configs(sample_ppp_batch(gen, lambda x: analytic.bar_lambda(params, x),
                                     stationary_envelope(params), n_draws))


def sample_stationary(rng: RngLike, params: ReservoirParams) -> Configuration:
    """One draw from the stationary law: Poisson with intensity ``bar_lambda(x) dx``."""
    return sample_stationary_batch(rng, params, 1)[0]


def _absorbed_positions(gen, starts: np.ndarray, t: float, step: float) -> np.ndarray:
    """Time-``t`` values of absorbed paths (endpoint value if absorbed)."""
    if starts.size == 0:
        return starts
    n = max(1, int(math.ceil(t / step - 1e-9)))
    return absorbed_walk(gen, starts, t / n, n).final


def _survivors(gen, omegas, t, step):
    sizes = np.array([len(w) for w in omegas], dtype=np.int64)
    starts = np.concatenate([w.positions for w in omegas]) if sizes.sum() else np.empty(0)
    final = _absorbed_positions(gen, starts, t, step)
    owner = np.repeat(np.arange(len(omegas)), sizes)
    alive = (final > 0) & (final < 1)
    parts = np.split(final[alive], np.cumsum(np.bincount(owner[alive], minlength=len(omegas)))[:-1])
    return parts


def _check_times(t, step):
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    if not step > 0:
        raise DomainError(f"step must be > 0, got {step!r}")


def sample_transition_batch(rng: RngLike, params: ReservoirParams,
                            omegas: Sequence[Configuration], t: float, step: float,
                            ctl: SeriesControl = DEFAULT_CONTROL) -> list:
    """Apply the transition kernel independently to each configuration in ``omegas``."""
    _check_times(t, step)
    omegas = list(omegas)
    if t == 0:
        return omegas
    gen = as_generator(rng)
    moved = _survivors(gen, omegas, t, step)
    if params.total > 0:
        env = entrance_envelope(params, t, ctl)
        fresh = sample_ppp_batch(gen, lambda x: analytic.entrance_intensity(params, x, t, ctl),
                                 env, len(omegas))
    else:
        fresh = [np.empty(0)] * len(omegas)
    return [Configuration(np.concatenate([a, b])) for a, b in zip(moved, fresh)]


def sample_transition(rng: RngLike, params: ReservoirParams, omega: Configuration,
                      t: float, step: float, ctl: SeriesControl = DEFAULT_CONTROL) -> Configuration:
    """Draw the configuration at time ``t`` started from ``omega``.

    Surviving particles of ``omega`` are moved by independent absorbed
    Brownian paths with time step ``step``; newly entered particles are an
    independent Poisson process with the entrance intensity at time ``t``.
    """
    return sample_transition_batch(rng, params, [omega], t, step, ctl)[0]


def _dual_positions(gen, params: ReservoirParams, starts: np.ndarray, t: float,
                    step: float) -> np.ndarray:
    """Euler scheme for ``dX = (log bar_lambda)'(X) dt + dB`` absorbed at {0, 1}.

    A step that lands outside (0, 1), or whose Brownian bridge crosses an
    endpoint, absorbs the particle there.
    """
    x = starts.astype(float).copy()
    if x.size == 0:
        return x
    n = max(1, int(math.ceil(t / step - 1e-9)))
    h = t / n
    sq = math.sqrt(h)
    l0, l1 = params.lambda0, params.lambda1
    alive = np.ones(x.size, dtype=bool)
    for _ in range(n):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xa = x[idx]
        lam = l0 * (1 - xa) + l1 * xa
        drift = (l1 - l0) / lam
        y = xa + drift * h + sq * gen.standard_normal(idx.size)
        u = gen.random(idx.size)
        inside = (y > 0) & (y < 1)
        p0 = np.where(inside, np.exp(-2.0 * xa * np.clip(y, 0, 1) / h), 1.0)
        p1 = np.where(inside, np.exp(-2.0 * (1 - xa) * (1 - np.clip(y, 0, 1)) / h), 1.0)
        to0 = (y <= 0) | (inside & (u < p0))
        to1 = ~to0 & ((y >= 1) | (inside & (u < p0 + p1)))
        y = np.where(to0, 0.0, np.where(to1, 1.0, y))
        x[idx] = y
        alive[idx] = ~(to0 | to1)
    return x


def sample_dual_transition_batch(rng: RngLike, params: ReservoirParams,
                                 omegas: Sequence[Configuration], t: float, step: float,
                                 ctl: SeriesControl = DEFAULT_CONTROL) -> list:
    """Adjoint kernel applied independently to each configuration."""
    _check_times(t, step)
    omegas = list(omegas)
    if t == 0:
        return omegas
    gen = as_generator(rng)
    sizes = np.array([len(w) for w in omegas], dtype=np.int64)
    starts = np.concatenate([w.positions for w in omegas]) if sizes.sum() else np.empty(0)
    final = _dual_positions(gen, params, starts, t, step)
    owner = np.repeat(np.arange(len(omegas)), sizes)
    alive = (final > 0) & (final < 1)
    moved = np.split(final[alive], np.cumsum(np.bincount(owner[alive], minlength=len(omegas)))[:-1])
    if params.total > 0:
        env = dual_entrance_envelope(params, t, ctl)

        def nu(x):
            return analytic.bar_lambda(params, x) * (1.0 - np.asarray(analytic.survival_prob(x, t, ctl)))

        fresh = sample_ppp_batch(gen, nu, env, len(omegas))
    else:
        fresh = [np.empty(0)] * len(omegas)
    return [Configuration(np.concatenate([a, b])) for a, b in zip(moved, fresh)]


def sample_dual_transition(rng: RngLike, params: ReservoirParams, omega: Configuration,
                           t: float, step: float,
                           ctl: SeriesControl = DEFAULT_CONTROL) -> Configuration:
    """Draw from the adjoint kernel: drifted diffusions plus ``bar_lambda P(tau <= t)`` entrances.

    If one of the potentials vanishes the drift is singular at that end; the
    Euler step simply absorbs there when it overshoots.
    """
    return sample_dual_transition_batch(rng, params, [omega], t, step, ctl)[0]


def dual_exit_frequency(rng: RngLike, params: ReservoirParams, x0: float, n_paths: int,
                        step: float = 1e-3, horizon: float = 20.0) -> np.ndarray:
    """Endpoints reached by ``n_paths`` drifted diffusions from ``x0`` (-1: alive at ``horizon``)."""
    final = _dual_positions(as_generator(rng), params, np.full(n_paths, float(x0)), horizon, step)
    return np.where(final <= 0, 0, np.where(final >= 1, 1, -1))


@dataclass(frozen=True)
class LabeledTrajectory:
    """One particle of a window simulation.

    ``path`` starts at the first grid time after birth; the birth point
    itself is ``(birth_time, birth_place)``.  ``mark`` is the absorption
    endpoint, or ``None`` if the particle was still alive at the cap.
    """

    birth_time: float
    birth_place: float
    path: Path
    mark: Optional[int]


@dataclass(frozen=True, eq=False)
class WindowSimulation:
    """Particles born at ``a`` (rate ``lambda0/(2a)``) and ``1 - a`` (rate ``lambda1/(2a)``).

    Births run over ``[grid.t0 - t_burn, grid.t_end]``; each trajectory is
    simulated until absorption or the cap ``grid.t_end + cap_extra``.
    Global grid index ``k`` is time ``grid.t0 + k grid.dt`` and may be
    negative for times before ``grid.t0``.
    """

    params: ReservoirParams
    a: float
    grid: TimeGrid
    t_burn: float
    birth_times: np.ndarray
    birth_places: np.ndarray
    first_index: np.ndarray   # global index of values[1]
    values: list              # values[i][0] is the birth place, then grid samples
    marks: np.ndarray         # 0, 1, or -1 when still alive at the cap
    exit_index: np.ndarray    # global index of absorption, or huge if unmarked
    cap_extra: float = 50.0

    def __len__(self) -> int:
        return int(self.birth_times.size)

    @classmethod
    def from_samples(cls, params: ReservoirParams, a: float, grid: TimeGrid, birth_times,
                     birth_places, samples, marks, t_burn: float = 0.0) -> "WindowSimulation":
        """Assemble a window from given trajectories.

        ``samples[i]`` holds the values at the grid times after the birth,
        ending with the endpoint value when ``marks[i]`` is 0 or 1 (use -1
        or ``None`` for an unmarked trajectory).
        """
        bt = np.asarray(birth_times, dtype=float)
        bp = np.asarray(birth_places, dtype=float)
        first = np.floor((bt - grid.t0) / grid.dt + 1e-9).astype(np.int64) + 1
        values = [np.concatenate([[p], np.asarray(v, dtype=float)]) for p, v in zip(bp, samples)]
        mk = np.array([-1 if m is None else int(m) for m in marks], dtype=np.int64)
        big = np.iinfo(np.int64).max // 4
        exit_index = np.array([f + v.size - 2 if m >= 0 else big
                               for f, v, m in zip(first, values, mk)], dtype=np.int64)
        return cls(params, a, grid, t_burn, bt, bp, first, values, mk, exit_index)

    @property
    def entry(self) -> np.ndarray:
        """0 for births at ``a``, 1 for births at ``1 - a``."""
        return (self.birth_places > 0.5).astype(int)

    def trajectory(self, i: int) -> LabeledTrajectory:
        vals = self.values[i][1:]
        grid = TimeGrid(self.grid.t0 + self.first_index[i] * self.grid.dt, self.grid.dt,
                        max(1, vals.size - 1))
        mark = int(self.marks[i]) if self.marks[i] >= 0 else None
        absorbed = Absorption(mark, vals.size - 1) if mark is not None else None
        if vals.size == 1:
            vals = np.repeat(vals, 2)
        return LabeledTrajectory(float(self.birth_times[i]), float(self.birth_places[i]),
                                 Path(grid, vals, absorbed), mark)

    @property
    def trajectories(self) -> list:
        return [self.trajectory(i) for i in range(len(self))]

    def positions_at(self, t: float) -> np.ndarray:
        """Positions of all particles alive at grid time ``t``."""
        k = self.grid.index_of(t)
        alive = np.flatnonzero((self.first_index <= k) & (self.exit_index > k))
        return np.array([self.values[i][k - self.first_index[i] + 1] for i in alive], dtype=float)

    def configuration(self, t: float, a_prime: Optional[float] = None) -> Configuration:
        """Particles in the closed window ``[a', 1 - a']`` at grid time ``t``; ``a' >= a``."""
        a_prime = self.a if a_prime is None else a_prime
        if a_prime < self.a or a_prime >= 0.5:
            raise DomainError(f"a' must lie in [a, 1/2), got {a_prime!r}")
        p = self.positions_at(t)
        return Configuration(p[(p >= a_prime) & (p <= 1 - a_prime)])

    def to_csv(self, path, stride: int = 1) -> None:
        """Rows ``trajectory_id, birth_time, birth_place, mark, t, x`` at every ``stride``-th sample."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trajectory_id", "birth_time", "birth_place", "mark", "t", "x"])
            dt, t0 = self.grid.dt, self.grid.t0
            for i in range(len(self)):
                mark = "" if self.marks[i] < 0 else int(self.marks[i])
                bt, bp = self.birth_times[i], self.birth_places[i]
                w.writerow([i, f"{bt:.17g}", f"{bp:.17g}", mark, f"{bt:.17g}", f"{bp:.17g}"])
                vals = self.values[i]
                for j in range(1, vals.size, stride):
                    t = t0 + (self.first_index[i] + j - 1) * dt
                    w.writerow([i, f"{bt:.17g}", f"{bp:.17g}", mark, f"{t:.17g}", f"{vals[j]:.17g}"])


def simulate_window(rng: RngLike, params: ReservoirParams, a: float, grid: TimeGrid,
                    t_burn: float = DEFAULT_T_BURN, cap_extra: float = 50.0) -> WindowSimulation:
    """Graphical construction of the stationary gas seen in ``[a, 1 - a]``."""
    if not 0 < a < 0.5:
        raise DomainError(f"a must lie in (0, 1/2), got {a!r}")
    if not t_burn >= 0:
        raise DomainError(f"t_burn must be >= 0, got {t_burn!r}")
    gen = as_generator(rng)
    t_lo, t_hi = grid.t0 - t_burn, grid.t_end
    span = t_hi - t_lo
    births = []
    for place, lam in ((a, params.lambda0), (1 - a, params.lambda1)):
        n = gen.poisson(lam / (2 * a) * span) if lam > 0 else 0
        births.append((t_lo + span * gen.random(n), np.full(n, place)))
    times = np.concatenate([b[0] for b in births])
    places = np.concatenate([b[1] for b in births])
    order = np.argsort(times, kind="stable")
    times, places = times[order], places[order]
    dt = grid.dt
    first = np.floor((times - grid.t0) / dt).astype(np.int64) + 1
    first_dt = np.clip(grid.t0 + first * dt - times, 1e-15 * dt, dt)
    n_cap = int(math.ceil((t_hi + cap_extra - t_lo) / dt)) + 1
    res = absorbed_walk(gen, places, dt, n_cap, first_dt=first_dt, keep_paths=True,
                        block=2048)
    marks = res.exit_end.astype(np.int64)
    big = np.iinfo(np.int64).max // 4
    exit_index = np.where(res.exit_step >= 0, first + res.exit_step - 1, big)
    return WindowSimulation(params, a, grid, t_burn, times, places, first, res.paths,
                            marks, exit_index, cap_extra)
