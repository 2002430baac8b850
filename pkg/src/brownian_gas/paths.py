"""Random path generation.

Brownian increments, absorbed Brownian motion with a Brownian-bridge exit
test between grid points, the discrete Skorokhod map on [0, 1], the
time-changed two-sided sticky Brownian motion, and Poisson samplers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .analytic import StickyParams
from .configuration import Configuration
from .errors import DomainError, EnvelopeViolation, StepCapExceeded

# Cap on the number of array elements drawn per block of steps.
_BLOCK_ELEMENTS = 1 << 20


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by ``(seed, stream_id)``.

    Every call to :meth:`generator` returns a fresh generator in the same
    state, so a sampler given the same stream twice draws the same numbers.
    Sub-streams are addressed with :meth:`child`.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(i) for i in ids))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + k dt``, ``k = 0..n_steps``."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt!r}")
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps!r}")

    @classmethod
    def over(cls, t_end: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        """Grid covering ``[t0, t_end]`` with step at most ``dt``; ``t_end`` lands on the grid."""
        n = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
        return cls(t0, (t_end - t0) / n, n)

    def time(self, k):
        return self.t0 + np.asarray(k) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of grid time ``t``; raises ``DomainError`` if ``t`` is off grid."""
        k = round((t - self.t0) / self.dt)
        if k < 0 or k > self.n_steps or abs(self.t0 + k * self.dt - t) > tol * max(1.0, abs(t)):
            raise DomainError(f"time {t!r} is not on the grid")
        return int(k)


@dataclass(frozen=True)
class Absorption:
    endpoint: int
    step_index: int


@dataclass(frozen=True)
class Path:
    grid: TimeGrid
    values: np.ndarray
    absorbed_at: Optional[Absorption] = None

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])


@dataclass(frozen=True)
class SkorokhodDecomposition:
    """Reflected path ``v = u + a0 - a1`` with local times at 0 and 1."""

    v: Path
    a0: np.ndarray
    a1: np.ndarray


def sample_bm_increments(rng: RngLike, grid: TimeGrid) -> np.ndarray:
    """``grid.n_steps`` independent N(0, dt) increments."""
    return as_generator(rng).standard_normal(grid.n_steps) * math.sqrt(grid.dt)


@dataclass
class AbsorbedBatch:
    """Outcome of :func:`absorbed_walk`.

    ``exit_step[i]`` is the first local step index whose value is the
    absorbing endpoint (``-1`` if alive after the last step), ``exit_end[i]``
    is the endpoint (``-1`` if alive) and ``final[i]`` is the value after the
    last simulated step.  ``paths[i]`` holds the simulated values from local
    index 0 through absorption when requested.
    """

    final: np.ndarray
    exit_step: np.ndarray
    exit_end: np.ndarray
    paths: Optional[list] = None


def absorbed_walk(gen: np.random.Generator, x0, dt: float, n_steps: int,
                  first_dt=None, keep_paths: bool = False,
                  block: int = 512) -> AbsorbedBatch:
    """Simulate many independent Brownian motions absorbed at {0, 1}.

    Between consecutive samples ``x, y`` inside (0, 1) the path is declared
    absorbed with the Brownian-bridge crossing probabilities
    ``exp(-2 x y / h)`` (at 0) and ``exp(-2 (1-x)(1-y) / h)`` (at 1).

    ``first_dt`` (per path, in ``(0, dt]``) sets a shorter first step so that
    paths born between grid points land on the grid after one step.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    k = x0.size
    final = x0.copy()
    exit_step = np.full(k, -1, dtype=np.int64)
    exit_end = np.full(k, -1, dtype=np.int8)
    segments = [[x0[i:i + 1]] for i in range(k)] if keep_paths else None
    active = np.flatnonzero((x0 > 0) & (x0 < 1))
    for i in np.flatnonzero(~((x0 > 0) & (x0 < 1))):
        exit_step[i], exit_end[i] = 0, 0 if x0[i] <= 0 else 1
        final[i] = float(exit_end[i])
    done = 0

    def advance(idx, steps, h):
        # h: scalar or per-row step variance; returns number of columns used
        nonlocal active
        nact, b = steps.shape
        prev = np.empty_like(steps)
        cur = final[idx]
        pos = cur[:, None] + np.cumsum(steps, axis=1)
        prev[:, 0] = cur
        prev[:, 1:] = pos[:, :-1]
        u = gen.random((nact, b))
        hh = h if np.ndim(h) == 0 else np.asarray(h)[:, None]
        p0 = np.exp(-2.0 * np.maximum(prev, 0) * np.maximum(pos, 0) / hh)
        p1 = np.exp(-2.0 * np.maximum(1 - prev, 0) * np.maximum(1 - pos, 0) / hh)
        hit0 = (pos <= 0) | (u < p0)
        hit1 = ~hit0 & ((pos >= 1) | (u < p0 + p1))
        hit = hit0 | hit1
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        rows = np.arange(nact)
        end = np.where(hit0[rows, first], 0, 1).astype(np.int8)
        survivors = ~any_hit
        final[idx[survivors]] = pos[survivors, -1]
        dead = idx[any_hit]
        exit_step[dead] = done + first[any_hit] + 1
        exit_end[dead] = end[any_hit]
        final[dead] = end[any_hit].astype(float)
        if keep_paths:
            for r in range(nact):
                i = idx[r]
                if any_hit[r]:
                    seg = pos[r, :first[r] + 1].copy()
                    seg[-1] = float(end[r])
                else:
                    seg = pos[r]
                segments[i].append(seg)
        active = idx[survivors]

    if first_dt is not None and active.size and n_steps > 0:
        fd = np.broadcast_to(np.asarray(first_dt, dtype=float), (k,))[active]
        z = gen.standard_normal(active.size) * np.sqrt(fd)
        advance(active, z[:, None], fd)
        done = 1
    while active.size and done < n_steps:
        b = min(block, n_steps - done, max(8, _BLOCK_ELEMENTS // active.size))
        z = gen.standard_normal((active.size, b)) * math.sqrt(dt)
        advance(active, z, dt)
        done += b
    paths = [np.concatenate(s) for s in segments] if keep_paths else None
    return AbsorbedBatch(final, exit_step, exit_end, paths)


def sample_absorbed_path(rng: RngLike, x0: float, grid: TimeGrid) -> Path:
    """Brownian path from ``x0`` on ``grid``, absorbed at 0 or 1."""
    if not 0 < x0 < 1:
        raise DomainError(f"x0 must lie in (0, 1), got {x0!r}")
    res = absorbed_walk(as_generator(rng), [x0], grid.dt, grid.n_steps, keep_paths=True)
    vals = np.empty(grid.n_steps + 1)
    p = res.paths[0]
    vals[:p.size] = p
    absorbed = None
    if res.exit_step[0] >= 0:
        vals[p.size:] = float(res.exit_end[0])
        absorbed = Absorption(int(res.exit_end[0]), int(res.exit_step[0]))
    return Path(grid, vals, absorbed)


def sample_absorption(rng: RngLike, x0: float, dt: float, n_paths: int,
                      max_time: float = 50.0):
    """Exit times and exit endpoints of ``n_paths`` absorbed paths from ``x0``.

    The exit time is the midpoint of the step in which absorption was
    detected.  Paths alive at ``max_time`` get time ``inf`` and endpoint -1.
    """
    n_steps = int(math.ceil(max_time / dt))
    res = absorbed_walk(as_generator(rng), np.full(n_paths, float(x0)), dt, n_steps)
    times = np.where(res.exit_step >= 0, (res.exit_step - 0.5) * dt, np.inf)
    return times, res.exit_end.astype(int)


def skorokhod_reflect(u, start: float, grid: Optional[TimeGrid] = None) -> SkorokhodDecomposition:
    """Discrete Skorokhod map of the driving path ``u`` onto [0, 1].

    Per step: ``w = v + du``; push up by ``max(0, -w)`` (local time at 0),
    then down by ``max(0, w - 1)`` (local time at 1).  An increment of size
    at least 1 could need both corrections and triggers a ``RuntimeWarning``.
    """
    vals = u.values if isinstance(u, Path) else np.asarray(u, dtype=float)
    if grid is None:
        grid = u.grid if isinstance(u, Path) else TimeGrid(0.0, 1.0, max(1, vals.size - 1))
    if not 0 <= start <= 1:
        raise DomainError(f"start must lie in [0, 1], got {start!r}")
    if abs(vals[0] - start) > 1e-12:
        raise DomainError("u(0) must equal start")
    n = vals.size
    v = np.empty(n)
    a0 = np.zeros(n)
    a1 = np.zeros(n)
    v[0] = start
    du = np.diff(vals)
    if du.size and np.max(np.abs(du)) >= 1:
        warnings.warn("skorokhod_reflect: step too coarse, an increment spans [0, 1]",
                      RuntimeWarning, stacklevel=2)
    du = du.tolist()
    vk, l0, l1 = float(start), 0.0, 0.0
    for k, d in enumerate(du, start=1):
        w = vk + d
        if w < 0:
            l0 -= w
            w = 0.0
        if w > 1:
            l1 += w - 1.0
            w = 1.0
        vk = w
        v[k], a0[k], a1[k] = w, l0, l1
    return SkorokhodDecomposition(Path(grid, v), a0, a1)


@dataclass
class StickyInternal:
    """Internal reflected path of one sticky simulation (non-uniform grid)."""

    ytime: np.ndarray
    v: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    sigma: np.ndarray


def sticky_batch(gen: np.random.Generator, theta: StickyParams, x0, grid: TimeGrid, *,
                 on_sample: Optional[Callable] = None, record: bool = True,
                 c: float = 0.5, s_min: float = 1e-4, s_max: float = 1e-2,
                 max_steps: int = 2_000_000, keep_internal: bool = False):
    """Simulate independent two-sided sticky Brownian motions on ``grid``.

    The reflected motion ``Y`` is advanced with state-dependent Gaussian
    steps of variance ``clip((c d)^2, s_min, s_max)`` where ``d`` is the
    distance to the nearest endpoint.  The local time pushed at that endpoint
    during a step is drawn exactly from the joint law of a Brownian increment
    and its running extremum.  The clock ``sigma = t + a0/theta0 + a1/theta1``
    is piecewise linear in ``Y``-time, with the local-time jump of a step
    placed at the boundary touch; ``X(t) = Y(sigma^{-1}(t))`` is evaluated at
    grid times from this piecewise-linear description.

    ``on_sample(path_idx, grid_idx, values)`` receives every evaluated batch
    of grid values; with ``record`` the values are also stored and returned
    as a ``(K, n_steps + 1)`` array.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(x0 < 0) or np.any(x0 > 1):
        raise DomainError("x0 must lie in [0, 1]")
    k = x0.size
    th0, th1 = theta.theta0, theta.theta1
    t0, h, n = grid.t0, grid.dt, grid.n_steps
    t_last = grid.t_end
    out = np.empty((k, n + 1)) if record else None

    def emit(idx, js, vals):
        if record:
            out[idx, js] = vals
        if on_sample is not None:
            on_sample(idx, js, vals)

    emit(np.arange(k), np.zeros(k, dtype=np.int64), x0.copy())
    # state of the still-running paths, kept compact
    ids = np.arange(k)
    v = x0.copy()
    sig = np.full(k, float(t0))
    nxt = np.ones(k, dtype=np.int64)
    if keep_internal:
        a0 = np.zeros(k)
        a1 = np.zeros(k)
        ytime = np.zeros(k)
        internal = [[(0.0, x0[i], 0.0, 0.0, t0)] for i in range(k)]
    inv_theta = np.array([1.0 / th0, 1.0 / th1])
    steps = 0
    while ids.size:
        steps += 1
        if steps > max_steps:
            raise StepCapExceeded(
                f"{ids.size} sticky paths still below the horizon after {max_steps} steps")
        near1 = v > 0.5
        wall = near1.astype(float)
        sgn = 2.0 * wall - 1.0          # +1 towards 1, -1 towards 0
        d = np.minimum(v, 1.0 - v)
        s = np.clip((c * d) ** 2, s_min, s_max)
        z = gen.standard_normal(ids.size) * np.sqrt(s)
        u = gen.random(ids.size)
        # running maximum of the increment pointing at the nearest wall
        b = sgn * z
        m = 0.5 * (b + np.sqrt(b * b - 2.0 * s * np.log1p(-u)))
        push = np.maximum(0.0, m - d)
        vn = np.clip(v + z - sgn * push, 0.0, 1.0)
        beta = push * inv_theta[near1.astype(np.intp)]
        sn = sig + s + beta
        # grid points reached during this step
        j_end = np.minimum(np.floor((sn - t0) / h + 1e-12).astype(np.int64), n)
        cnt = np.maximum(j_end - nxt + 1, 0)
        cmax = cnt.max()
        if cmax:
            if cmax == 1:
                rows = np.flatnonzero(cnt)
                js = nxt[rows]
            else:
                rows = np.repeat(np.arange(ids.size), cnt)
                offs = np.arange(rows.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                js = nxt[rows] + offs
            vals = _interp_step(t0 + js * h - sig[rows], s[rows], beta[rows], v[rows], vn[rows],
                                wall[rows])
            emit(ids[rows], js, vals)
            nxt += cnt
        if keep_internal:
            for r, i in enumerate(ids):
                a0[i] += push[r] * (1 - wall[r])
                a1[i] += push[r] * wall[r]
                ytime[i] += s[r]
                internal[i].append((ytime[i], vn[r], a0[i], a1[i], sn[r]))
        running = sn < t_last
        if running.all():
            v, sig = vn, sn
        else:
            ids, v, sig, nxt = ids[running], vn[running], sn[running], nxt[running]
    internals = None
    if keep_internal:
        internals = [StickyInternal(*map(np.array, zip(*rows))) for rows in internal]
    return out, internals


def _interp_step(dt_in, s, beta, v_from, v_to, boundary):
    """X-value at elapsed X-time ``dt_in`` within one internal step."""
    lin = v_from + (v_to - v_from) * np.clip(dt_in / s, 0.0, 1.0)
    half = 0.5 * s
    first = v_from + (boundary - v_from) * np.clip(dt_in / half, 0.0, 1.0)
    last = boundary + (v_to - boundary) * np.clip((dt_in - half - beta) / half, 0.0, 1.0)
    stuck = np.where(dt_in <= half, first, np.where(dt_in <= half + beta, boundary, last))
    return np.where(beta > 0, stuck, lin)


def sample_sticky_path(rng: RngLike, theta: StickyParams, x0: float, grid: TimeGrid,
                       **kwargs) -> Path:
    """One two-sided sticky Brownian path from ``x0`` evaluated on ``grid``."""
    vals, _ = sticky_batch(as_generator(rng), theta, [x0], grid, **kwargs)
    return Path(grid, vals[0])


def sample_sticky_paths(rng: RngLike, theta: StickyParams, x0, grid: TimeGrid,
                        **kwargs) -> np.ndarray:
    """Many independent sticky paths; returns a ``(len(x0), n_steps + 1)`` array."""
    vals, _ = sticky_batch(as_generator(rng), theta, x0, grid, **kwargs)
    return vals


def sticky_discounted_mc(rng: RngLike, theta: StickyParams, lam: float, x0: float,
                         functions: dict, n_paths: int, horizon: Optional[float] = None,
                         dt: float = 5e-3, batch: int = 25_000, **kwargs) -> dict:
    """Monte Carlo estimates of ``E_x int_0^inf exp(-lam t) f(X_t) dt``.

    The time integral is a trapezoid sum on a grid of step ``dt`` truncated at
    ``horizon`` (default: where ``exp(-lam t) < 1e-5``).  Returns, for every
    name in ``functions``, a pair ``(mean, standard_error)``.
    """
    if horizon is None:
        horizon = math.log(1e5) / lam
    grid = TimeGrid.over(horizon, dt)
    w = np.full(grid.n_steps + 1, grid.dt)
    w[0] = w[-1] = grid.dt / 2
    w *= np.exp(-lam * grid.times)
    gen = as_generator(rng)
    sums = {name: [] for name in functions}
    for start in range(0, n_paths, batch):
        m = min(batch, n_paths - start)
        acc = {name: np.zeros(m) for name in functions}

        def on_sample(idx, js, vals):
            for name, f in functions.items():
                acc[name] += np.bincount(idx, weights=w[js] * f(vals), minlength=m)

        sticky_batch(gen, theta, np.full(m, float(x0)), grid, on_sample=on_sample,
                     record=False, **kwargs)
        for name in functions:
            sums[name].append(acc[name])
    out = {}
    for name, parts in sums.items():
        arr = np.concatenate(parts)
        out[name] = (float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size)))
    return out


def sample_poisson_times(rng: RngLike, rate: float, t_start: float, t_end: float) -> np.ndarray:
    """Sorted arrival times of a homogeneous Poisson process on ``[t_start, t_end]``."""
    if not rate >= 0:
        raise DomainError(f"rate must be >= 0, got {rate!r}")
    if not t_start <= t_end:
        raise DomainError("t_start must not exceed t_end")
    gen = as_generator(rng)
    n = gen.poisson(rate * (t_end - t_start)) if rate > 0 else 0
    return np.sort(t_start + (t_end - t_start) * gen.random(n))


@dataclass(frozen=True)
class Envelope:
    """Piecewise-constant function on the partition ``edges`` of (0, 1)."""

    edges: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        hgt = np.asarray(self.heights, dtype=float)
        if e.ndim != 1 or hgt.shape != (e.size - 1,) or np.any(np.diff(e) <= 0) or np.any(hgt < 0):
            raise DomainError("envelope needs increasing edges and nonnegative heights")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "heights", hgt)

    @classmethod
    def constant(cls, value: float) -> "Envelope":
        return cls(np.array([0.0, 1.0]), np.array([float(value)]))

    @property
    def masses(self) -> np.ndarray:
        return self.heights * np.diff(self.edges)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def __call__(self, x):
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.heights.size - 1)
        return self.heights[i]

    def inverse_cdf(self, u):
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        target = np.asarray(u) * cum[-1]
        i = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, self.heights.size - 1)
        frac = (target - cum[i]) / np.where(self.masses[i] > 0, self.masses[i], 1.0)
        return self.edges[i] + frac * (self.edges[i + 1] - self.edges[i])


def sample_ppp_batch(gen: np.random.Generator, intensity: Callable, envelope: Envelope,
                     n_draws: int) -> list:
    """``n_draws`` independent Poisson point processes on (0, 1) by thinning.

    Returns a list of sorted position arrays.
    """
    total = envelope.total
    if total == 0:
        return [np.empty(0) for _ in range(n_draws)]
    counts = gen.poisson(total, size=n_draws)
    n = int(counts.sum())
    xs = envelope.inverse_cdf(gen.random(n))
    # positions on an envelope edge at 0 or 1 have measure zero; keep them inside
    xs = np.clip(xs, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    lam = np.asarray(intensity(xs), dtype=float) if n else np.empty(0)
    env = envelope(xs)
    if np.any(lam > env * (1 + 1e-9) + 1e-300):
        bad = xs[np.argmax(lam - env)]
        raise EnvelopeViolation(f"intensity exceeds envelope at x={bad:.6g}")
    keep = gen.random(n) * env < lam
    owner = np.repeat(np.arange(n_draws), counts)
    kept_counts = np.bincount(owner[keep], minlength=n_draws)
    parts = np.split(xs[keep], np.cumsum(kept_counts)[:-1])
    return [np.sort(p) for p in parts]


def default_envelope(intensity: Callable, cells: int = 1024, safety: float = 1.001) -> Envelope:
    """Constant envelope: the largest intensity value on a ``cells``-cell grid, padded."""
    x = np.linspace(0.0, 1.0, cells + 1)
    x[0], x[-1] = np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0)
    return Envelope.constant(float(np.max(intensity(x))) * safety)


def sample_ppp_spatial(rng: RngLike, intensity: Callable, mass: float,
                       envelope: Optional[Envelope] = None) -> Configuration:
    """Poisson point process on (0, 1) with the given intensity, by thinning.

    ``mass`` is the caller's value of the integrated intensity; it must not
    exceed the envelope mass.  Without an ``envelope`` the constant
    :func:`default_envelope` is used.
    """
    if envelope is None:
        envelope = default_envelope(intensity)
    if mass > envelope.total * (1 + 1e-9) + 1e-12:
        raise EnvelopeViolation(f"intensity mass {mass} exceeds envelope mass {envelope.total}")
    return Configuration(sample_ppp_batch(as_generator(rng), intensity, envelope, 1)[0])
