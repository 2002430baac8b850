"""Closed forms and convergent series for the deterministic kernels.

Brownian motion here has generator ``f''/2`` on ``(0, 1)`` and is absorbed at
the endpoints.  All functions accept numpy arrays for the spatial arguments
where that is natural; scalars in, floats out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError, SeriesConvergenceError

# Below this time the Gaussian image sums converge faster than the sine series.
T_SWITCH = 0.05
QUAD_ABS_TOL = 1e-9


@dataclass(frozen=True)
class ReservoirParams:
    """Chemical potentials of the left and right reservoirs."""

    lambda0: float
    lambda1: float

    def __post_init__(self):
        for name in ("lambda0", "lambda1"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def total(self) -> float:
        return self.lambda0 + self.lambda1


@dataclass(frozen=True)
class SeriesControl:
    """Truncation policy for the eigen and image series."""

    abs_tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be > 0, got {self.abs_tol!r}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms!r}")


@dataclass(frozen=True)
class StickyParams:
    """Stickiness at the left and right endpoints; both strictly positive."""

    theta0: float
    theta1: float

    def __post_init__(self):
        for name in ("theta0", "theta1"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")

    @property
    def norm(self) -> float:
        return math.hypot(self.theta0, self.theta1)


DEFAULT_CONTROL = SeriesControl()


def _open_unit(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)) or np.any(~(arr < 1)):
        raise DomainError(f"{name} must lie in (0, 1)")
    return arr


def _closed_unit(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0)) or np.any(~(arr <= 1)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def bar_lambda(params: ReservoirParams, x):
    """Linear interpolation ``lambda0 (1 - x) + lambda1 x`` of the reservoir densities."""
    x = _open_unit(x)
    return _out(params.lambda0 * (1.0 - x) + params.lambda1 * x)


def mean_exit_time(x):
    """Expected absorption time ``x (1 - x)`` from ``x``."""
    x = _open_unit(x)
    return _out(x * (1.0 - x))


def _eigen_terms(t, decay_prefactor, ctl):
    # Number of modes so that sum_{n>N} c/n exp(-n^2 pi^2 t/2) < abs_tol.
    # The tail is bounded by its first term over (1 - ratio).
    a = math.pi ** 2 * t / 2.0
    for n in range(1, ctl.max_terms + 1):
        ratio = math.exp(-a * (2 * n + 1))
        bound = decay_prefactor / n * math.exp(-a * n * n) / max(1.0 - ratio, 1e-300)
        if bound < ctl.abs_tol:
            return n
    raise SeriesConvergenceError(
        f"eigen series at t={t} needs more than max_terms={ctl.max_terms} terms"
    )


def _image_terms(t, ctl):
    # Image k contributes Gaussian mass beyond distance (2k - 1); stop when
    # the remaining tail, summed geometrically, is below abs_tol.
    sq = math.sqrt(t)
    for k in range(1, ctl.max_terms + 1):
        z = (2 * k - 1) / sq
        tail = 4.0 * special.ndtr(-z) + 4.0 * math.exp(-z * z / 2) / math.sqrt(2 * math.pi * t)
        if tail < ctl.abs_tol:
            return k
    raise SeriesConvergenceError(
        f"image series at t={t} needs more than max_terms={ctl.max_terms} terms"
    )


def _hit0(x, t, ctl):
    """P_x(tau_0 <= t) for x array in (0, 1), t > 0."""
    if t >= T_SWITCH:
        n_terms = _eigen_terms(t, 2.0 / math.pi, ctl)
        n = np.arange(1, n_terms + 1)
        coef = 2.0 / (n * math.pi) * np.exp(-(n * math.pi) ** 2 * t / 2.0)
        s = np.sin(np.multiply.outer(x, n) * math.pi) @ coef
        return (1.0 - x) - s
    k_terms = _image_terms(t, ctl)
    k = np.arange(-k_terms, k_terms + 1)
    shifted = np.add.outer(x, 2.0 * k)
    vals = np.sign(shifted) * 2.0 * special.ndtr(-np.abs(shifted) / math.sqrt(t))
    return vals.sum(axis=-1)


def hitting_prob(endpoint: int, x, t: float, ctl: SeriesControl = DEFAULT_CONTROL):
    """Probability that absorbed Brownian motion from ``x`` is absorbed at
    ``endpoint`` by time ``t``.

    Uses the sine series for ``t >= T_SWITCH`` and the Gaussian image sum
    below it.
    """
    if endpoint not in (0, 1):
        raise DomainError(f"endpoint must be 0 or 1, got {endpoint!r}")
    x = _open_unit(x)
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    if t == 0:
        return _out(np.zeros_like(x))
    y = x if endpoint == 0 else 1.0 - x
    return _out(np.clip(_hit0(y, t, ctl), 0.0, 1.0))


def survival_prob(x, t: float, ctl: SeriesControl = DEFAULT_CONTROL):
    """Probability of not being absorbed by time ``t``."""
    return _out(1.0 - np.asarray(hitting_prob(0, x, t, ctl)) - np.asarray(hitting_prob(1, x, t, ctl)))


def transition_density_q0(x, y, t: float, ctl: SeriesControl = DEFAULT_CONTROL):
    """Sub-probability density of the absorbed motion: ``P_x(X_t in dy, t < tau)/dy``."""
    x = _open_unit(x)
    y = _open_unit(y, "y")
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t!r}")
    x, y = np.broadcast_arrays(x, y)
    if t >= T_SWITCH:
        n_terms = _eigen_terms(t, 2.0, ctl)
        n = np.arange(1, n_terms + 1) * math.pi
        coef = 2.0 * np.exp(-n * n * t / 2.0)
        out = (np.sin(np.multiply.outer(x, n)) * np.sin(np.multiply.outer(y, n))) @ coef
    else:
        out = _q0_images(x, y, t, ctl)
    return _out(np.maximum(out, 0.0))


def _q0_images(x, y, t, ctl):
    k_terms = _image_terms(t, ctl)
    k = 2.0 * np.arange(-k_terms, k_terms + 1)
    d_plus = np.add.outer(y - x, k)
    d_minus = np.add.outer(y + x, k)
    norm = 1.0 / math.sqrt(2 * math.pi * t)
    return norm * (np.exp(-d_plus ** 2 / (2 * t)) - np.exp(-d_minus ** 2 / (2 * t))).sum(axis=-1)


def transition_density_q0_eigen(x, y, t: float, n_terms: int = 2000):
    """Plain sine-series evaluation of the absorbed density, for cross-checks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = np.arange(1, n_terms + 1) * math.pi
    coef = 2.0 * np.exp(-n * n * t / 2.0)
    return _out((np.sin(np.multiply.outer(x, n)) * np.sin(np.multiply.outer(y, n))) @ coef)


def entrance_intensity(params: ReservoirParams, x, t: float,
                       ctl: SeriesControl = DEFAULT_CONTROL):
    """Density at ``x`` of particles injected during ``[0, t]`` and still alive."""
    p0 = np.asarray(hitting_prob(0, x, t, ctl))
    p1 = np.asarray(hitting_prob(1, x, t, ctl))
    return _out(params.lambda0 * p0 + params.lambda1 * p1)


def _quad(f, a, b, points=None, tol=QUAD_ABS_TOL):
    val, err, *rest = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=400,
                                     points=points, full_output=1)
    if len(rest) > 1 and err > 10 * tol:
        raise QuadratureError(f"quadrature error estimate {err:.3g} above tolerance {tol:.3g}")
    return val


def _quad_unit(f, points=None):
    # Split at 1/2: small-t integrands concentrate at both ends.
    inner = [p for p in (points or []) if 0 < p < 1 and p != 0.5]
    left = [p for p in inner if p < 0.5] or None
    right = [p for p in inner if p > 0.5] or None
    return _quad(f, 0.0, 0.5, left) + _quad(f, 0.5, 1.0, right)


def total_entrance_mass(params: ReservoirParams, t: float,
                        ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Total mass of the entrance measure at time ``t``, by adaptive quadrature."""
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    if t == 0 or params.total == 0:
        return 0.0
    return _quad_unit(lambda x: entrance_intensity(params, x, t, ctl))


def total_entrance_mass_closed(params: ReservoirParams, t: float, n_terms: int = 20_000) -> float:
    """Sine-series integral of the entrance measure; slow to converge at small t."""
    if t == 0:
        return 0.0
    n = np.arange(1, n_terms + 1, 2)
    s = np.sum(4.0 / (n * math.pi) ** 2 * np.exp(-(n * math.pi) ** 2 * t / 2.0))
    return params.total * (0.5 - s)


def green_integral(x, y):
    """Occupation density ``int_0^inf q_t(x, y) dt``: ``2 min(x,y) (1 - max(x,y))``."""
    x = _open_unit(x)
    y = _open_unit(y, "y")
    return _out(2.0 * np.minimum(x, y) * (1.0 - np.maximum(x, y)))


def mass_identity_defect(params: ReservoirParams, t: float,
                         ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Gap between the entrance mass and the mass of ``bar_lambda(x) P_x(tau <= t) dx``."""
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t!r}")
    mu = total_entrance_mass(params, t, ctl)
    nu = _quad_unit(lambda x: bar_lambda(params, x)
                    * (1.0 - survival_prob(x, t, ctl)))
    return abs(mu - nu)


def semigroup_defect(params: ReservoirParams, s: float, t: float, y_grid,
                     ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Largest violation over ``y_grid`` of
    ``int mu_s(dx) q_t(x, y) = mu_{s+t}(y) - mu_t(y)``."""
    if not (s > 0 and t > 0):
        raise DomainError("s and t must be > 0")
    ys = np.atleast_1d(_open_unit(y_grid, "y_grid"))
    if ys.size == 0:
        raise DomainError("y_grid must be nonempty")
    worst = 0.0
    for y in ys:
        lhs = _quad_unit(lambda x: entrance_intensity(params, x, s, ctl)
                         * transition_density_q0(x, y, t, ctl), points=[y])
        rhs = entrance_intensity(params, y, s + t, ctl) - entrance_intensity(params, y, t, ctl)
        worst = max(worst, abs(lhs - rhs))
    return worst


def green_defect(x: float, y: float, horizon: float = 10.0,
                 ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """``|int_0^horizon q_t(x, y) dt - green_integral(x, y)|``.

    Integrates in ``u = sqrt(t)`` so the ``t^{-1/2}`` peak at ``x = y`` is smooth.
    """
    def f(u):
        if u == 0.0:
            return 2.0 / math.sqrt(2 * math.pi) if x == y else 0.0
        return 2.0 * u * transition_density_q0(x, y, u * u, ctl)
    val = _quad(f, 0.0, math.sqrt(T_SWITCH)) + _quad(f, math.sqrt(T_SWITCH), math.sqrt(horizon))
    return abs(val - green_integral(x, y))


def hitting_laplace(y, lam: float):
    """``int_0^inf exp(-lam t) P_y(tau_0 <= t) dt = sinh(k (1-y)) / (lam sinh k)``, ``k = sqrt(2 lam)``."""
    k = math.sqrt(2.0 * lam)
    y = np.asarray(y, dtype=float)
    # exp-scaled ratio to avoid overflow at large k
    ratio = np.exp(-k * y) * (-np.expm1(-2.0 * k * (1.0 - y))) / (-math.expm1(-2.0 * k))
    return _out(ratio / lam)


@dataclass(frozen=True)
class StickyResolvent:
    """Resolvent measure ``r_lam(x, dy)`` of the two-sided sticky motion.

    ``density`` is the absolutely continuous part on ``(0, 1)``; ``atom0`` and
    ``atom1`` are the masses carried by ``{0}`` and ``{1}``.
    """

    theta: StickyParams
    lam: float
    x: float
    density: Callable
    atom0: float
    atom1: float

    def integrate(self, f: Callable[[float], float]) -> float:
        """``int f(y) r_lam(x, dy)``, with ``f`` evaluated at 0 and 1 for the atoms."""
        cont = _quad(lambda y: f(y) * self.density(y), 0.0, 1.0,
                     points=[self.x] if 0 < self.x < 1 else None, tol=1e-12)
        return cont + f(0.0) * self.atom0 + f(1.0) * self.atom1

    def total_mass(self) -> float:
        return self.integrate(lambda y: 1.0)


def _sticky_parts(theta: StickyParams, lam: float):
    # Each of the hyperbolic combinations is returned with its leading
    # exponential factored out, so nothing overflows for large sqrt(2 lam).
    k = math.sqrt(2.0 * lam)
    t0, t1 = theta.theta0, theta.theta1

    def left(x):  # 2 exp(-k x) (2 t0 ch(kx) + k sh(kx))
        e = np.exp(-2.0 * k * np.asarray(x, dtype=float))
        return (2 * t0 + k) + (2 * t0 - k) * e

    def right(y):  # 2 exp(-k (1-y)) (2 t1 ch(k(1-y)) + k sh(k(1-y)))
        e = np.exp(-2.0 * k * (1.0 - np.asarray(y, dtype=float)))
        return (2 * t1 + k) + (2 * t1 - k) * e

    e2 = math.exp(-2.0 * k)
    w_scaled = 4 * lam * (t0 + t1) * (1 + e2) + 2 * k * (2 * t0 * t1 + lam) * (1 - e2)  # 2 exp(-k) W
    return k, left, right, w_scaled


def sticky_resolvent(theta: StickyParams, lam: float, x: float) -> StickyResolvent:
    """Explicit resolvent kernel of the two-sided sticky Brownian motion."""
    if not lam > 0:
        raise DomainError(f"lam must be > 0, got {lam!r}")
    x = float(_closed_unit(x))
    k, left, right, w_scaled = _sticky_parts(theta, lam)

    def density(y):
        y = np.asarray(y, dtype=float)
        lo = np.minimum(x, y)
        hi = np.maximum(x, y)
        # g(lo, hi) = 2 A(lo) B(hi) / W with the exponentials recombined
        val = np.exp(-k * (hi - lo)) * left(lo) * right(hi) / w_scaled
        return _out(val)

    atom0 = float(2.0 * np.exp(-k * x) * right(x) / w_scaled)
    atom1 = float(2.0 * np.exp(-k * (1.0 - x)) * left(x) / w_scaled)
    return StickyResolvent(theta, lam, x, density, atom0, atom1)


def sticky_green(theta: StickyParams, lam: float, x, y):
    """Density part ``g_lam(min(x,y), max(x,y))`` of the sticky resolvent."""
    k, left, right, w_scaled = _sticky_parts(theta, lam)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    return _out(np.exp(-k * (hi - lo)) * left(lo) * right(hi) / w_scaled)


def dual_exit_right_prob(params: ReservoirParams, x):
    """Probability that the ``(log bar_lambda)'``-drifted diffusion from ``x``
    exits at 1.  Equals ``x lambda1 / bar_lambda(x)``."""
    x = _open_unit(x)
    return _out(x * params.lambda1 / (params.lambda0 * (1 - x) + params.lambda1 * x))
