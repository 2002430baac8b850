"""Goodness-of-fit tests and Monte Carlo error bars for the acceptance suite.

All chi-square tests pool cells greedily until every expected count is at
least 5.  Parameters of the null laws are fixed by theory, so the degrees of
freedom are ``cells - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
from scipy import stats as st

from . import io
from .errors import InsufficientSampleError

DEFAULT_LEVEL = 0.01
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class GofReport:
    statistic: float
    dof: int
    p_value: float
    level: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.p_value >= self.level

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def to_json(self) -> str:
        return io.dumps(self.to_dict())


def _pool(expected: np.ndarray, observed: np.ndarray):
    """Greedy left-to-right merge; a short final run joins the previous cell."""
    cells_e, cells_o = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(expected, observed):
        acc_e += e
        acc_o += o
        if acc_e >= MIN_EXPECTED:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 or acc_o > 0:
        if cells_e:
            cells_e[-1] += acc_e
            cells_o[-1] += acc_o
        else:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
    return np.array(cells_e), np.array(cells_o)


def _chi2(expected, observed, level, details) -> GofReport:
    e, o = _pool(expected, observed)
    if e.size < 2:
        raise InsufficientSampleError("fewer than two cells after pooling")
    stat = float(np.sum((o - e) ** 2 / e))
    dof = int(e.size - 1)
    p = float(st.chi2.sf(stat, dof))
    details = dict(details, cells=int(e.size))
    return GofReport(stat, dof, min(1.0, max(0.0, p)), level, details)


def discrete_gof(values, dist, level: float = DEFAULT_LEVEL, details: Optional[dict] = None) -> GofReport:
    """Chi-square test of integer ``values`` against a frozen scipy discrete law.

    The two outermost cells absorb the left and right tails.
    """
    v = np.asarray(values, dtype=np.int64).ravel()
    if v.size == 0:
        raise InsufficientSampleError("no values")
    n = v.size
    lo = int(min(v.min(), dist.ppf(1e-12)))
    hi = int(max(v.max(), dist.isf(1e-12)))
    k = np.arange(lo, hi + 1)
    prob = dist.pmf(k)
    prob[0] = dist.cdf(lo)
    prob[-1] = dist.sf(hi - 1)
    obs = np.bincount(v - lo, minlength=k.size).astype(float)
    return _chi2(n * prob, obs, level, dict(details or {}, n=int(n)))


def poisson_gof(counts, mean: float, level: float = DEFAULT_LEVEL) -> GofReport:
    """Counts against Poisson(``mean``)."""
    if not mean > 0:
        raise ValueError(f"mean must be > 0, got {mean!r}")
    return discrete_gof(counts, st.poisson(mean), level, {"law": "poisson", "mean": float(mean)})


def skellam_gof(values, mu1: float, mu2: float, level: float = DEFAULT_LEVEL,
                shift: int = 0) -> GofReport:
    """Values minus ``shift`` against the law of ``Poisson(mu1) - Poisson(mu2)``."""
    if not (mu1 > 0 and mu2 > 0):
        raise ValueError("mu1 and mu2 must be > 0")
    v = np.asarray(values, dtype=np.int64) - int(shift)
    return discrete_gof(v, st.skellam(mu1, mu2), level,
                        {"law": "skellam", "mu1": float(mu1), "mu2": float(mu2), "shift": int(shift)})


def skellam_gof_shifted(values, mu1: float, mu2: float, level: float = DEFAULT_LEVEL,
                        max_shift: int = 1) -> GofReport:
    """Best of :func:`skellam_gof` over integer location shifts ``|s| <= max_shift``."""
    reports = [skellam_gof(values, mu1, mu2, level, s) for s in range(-max_shift, max_shift + 1)]
    return max(reports, key=lambda r: (r.p_value, -abs(r.details["shift"])))


def mean_variance_test(samples, target_mean: float, target_var: float,
                       level: float = DEFAULT_LEVEL) -> GofReport:
    """Joint check of mean and variance.

    z-test for the mean with the estimated standard error, and the
    ``(n-1) s^2 / sigma^2`` chi-square test for the variance.  Both p-values
    are two-sided; the report carries the Bonferroni combination
    ``min(1, 2 min(p_mean, p_var))``, so it passes iff both pass at ``level/2``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 30:
        raise InsufficientSampleError(f"need at least 30 samples, got {n}")
    if not target_var > 0:
        raise ValueError("target_var must be > 0")
    m, s2 = float(x.mean()), float(x.var(ddof=1))
    se = math.sqrt(s2 / n) if s2 > 0 else math.sqrt(target_var / n)
    z = (m - target_mean) / se
    p_mean = float(2 * st.norm.sf(abs(z)))
    q = (n - 1) * s2 / target_var
    p_var = float(min(1.0, 2 * min(st.chi2.cdf(q, n - 1), st.chi2.sf(q, n - 1))))
    p = min(1.0, 2 * min(p_mean, p_var))
    return GofReport(float(z), n - 1, p, level,
                     {"mean": m, "var": s2, "z": float(z), "var_stat": float(q),
                      "p_mean": p_mean, "p_var": p_var, "n": int(n)})


def two_sample_chi2(a, b, level: float = DEFAULT_LEVEL) -> GofReport:
    """Homogeneity test for two samples of integers (2 x k contingency table).

    Adjacent values are pooled until the smaller expected count in each
    cell is at least 5.
    """
    a = np.asarray(a, dtype=np.int64).ravel()
    b = np.asarray(b, dtype=np.int64).ravel()
    if a.size == 0 or b.size == 0:
        raise InsufficientSampleError("both samples must be nonempty")
    lo = int(min(a.min(), b.min()))
    ca = np.bincount(a - lo).astype(float)
    cb = np.bincount(b - lo).astype(float)
    k = max(ca.size, cb.size)
    ca = np.pad(ca, (0, k - ca.size))
    cb = np.pad(cb, (0, k - cb.size))
    na, nb = a.size, b.size
    share = min(na, nb) / (na + nb)
    cells_a, cells_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if (acc_a + acc_b) * share >= MIN_EXPECTED:
            cells_a.append(acc_a)
            cells_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if cells_a:
            cells_a[-1] += acc_a
            cells_b[-1] += acc_b
        else:
            cells_a.append(acc_a)
            cells_b.append(acc_b)
    if len(cells_a) < 2:
        raise InsufficientSampleError("fewer than two cells after pooling")
    obs = np.array([cells_a, cells_b])
    tot = obs.sum(axis=0)
    exp = np.outer([na, nb], tot) / (na + nb)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(cells_a) - 1
    return GofReport(stat, dof, float(st.chi2.sf(stat, dof)), level,
                     {"cells": len(cells_a), "n_a": int(na), "n_b": int(nb)})


def mc_mean(samples):
    """Sample mean and its standard error."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientSampleError("need at least two samples")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def within_mc_error(estimate: float, se: float, target: float, k: float = 3.0,
                    slack: float = 0.0) -> bool:
    """``|estimate - target| <= k se + slack``."""
    return abs(estimate - target) <= k * se + slack


def correlation_test(x, y, k: float = 3.0) -> dict:
    """Sample correlation and whether it lies within ``k`` standard errors of 0.

    Under independence the standard error is ``1/sqrt(n)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise InsufficientSampleError("need at least three pairs")
    if x.std() == 0 or y.std() == 0:
        r = 0.0
    else:
        r = float(np.corrcoef(x, y)[0, 1])
    se = 1.0 / math.sqrt(n)
    return {"r": r, "se": se, "pass": abs(r) <= k * se}


def binned_tv(a, b) -> float:
    """Total-variation distance between the empirical laws of two integer samples."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo = int(min(a.min(), b.min()))
    k = int(max(a.max(), b.max())) - lo + 1
    pa = np.bincount(a - lo, minlength=k) / a.size
    pb = np.bincount(b - lo, minlength=k) / b.size
    return float(0.5 * np.abs(pa - pb).sum())
