import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from brownian_gas import analytic
from brownian_gas.analytic import ReservoirParams, SeriesControl, StickyParams
from brownian_gas.errors import DomainError, SeriesConvergenceError

import oracles

CTL = analytic.DEFAULT_CONTROL
unit = st.floats(min_value=1e-3, max_value=1 - 1e-3)
times = st.floats(min_value=1e-4, max_value=5.0)


# -- parameter types ---------------------------------------------------------

@pytest.mark.parametrize("l0,l1", [(-1.0, 1.0), (1.0, -0.5), (math.inf, 1.0), (1.0, math.nan)])
def test_reservoir_params_rejects_bad_values(l0, l1):
    with pytest.raises(DomainError):
        ReservoirParams(l0, l1)


def test_series_control_and_sticky_params_validation():
    with pytest.raises(DomainError):
        SeriesControl(abs_tol=0.0)
    with pytest.raises(DomainError):
        SeriesControl(max_terms=0)
    with pytest.raises(DomainError):
        StickyParams(0.0, 1.0)


def test_series_control_reports_truncation():
    with pytest.raises(SeriesConvergenceError):
        analytic.hitting_prob(0, 0.5, 1e-3, SeriesControl(abs_tol=1e-300, max_terms=1))
    with pytest.raises(SeriesConvergenceError):
        analytic.hitting_prob(0, 0.5, 0.1, SeriesControl(abs_tol=1e-15, max_terms=2))


# -- elementary functions ----------------------------------------------------

def test_bar_lambda_examples():
    assert analytic.bar_lambda(ReservoirParams(2, 1), 0.25) == pytest.approx(1.75, abs=1e-15)
    assert analytic.bar_lambda(ReservoirParams(0, 1), 0.5) == pytest.approx(0.5, abs=1e-15)
    xs = np.linspace(0.01, 0.99, 9)
    assert np.allclose(analytic.bar_lambda(ReservoirParams(3, 3), xs), 3.0)
    with pytest.raises(DomainError):
        analytic.bar_lambda(ReservoirParams(1, 1), 1.0)


def test_mean_exit_time_examples():
    assert analytic.mean_exit_time(0.5) == pytest.approx(0.25)
    assert analytic.mean_exit_time(0.1) == pytest.approx(0.09)
    assert analytic.mean_exit_time(1e-12) < 1e-11
    with pytest.raises(DomainError):
        analytic.mean_exit_time(0.0)


def test_green_integral_examples():
    assert analytic.green_integral(0.25, 0.5) == pytest.approx(0.25)
    assert analytic.green_integral(0.5, 0.25) == pytest.approx(0.25)
    assert analytic.green_integral(0.5, 0.5) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        analytic.green_integral(0.5, 1.2)


# -- hitting probabilities ---------------------------------------------------

def test_hitting_prob_matches_pde_oracle():
    assert abs(analytic.hitting_prob(0, 0.5, 0.25) - oracles.HIT0_X05_T025) < oracles.ORACLE_TOL
    assert abs(analytic.hitting_prob(0, 0.1, 0.1) - oracles.HIT0_X01_T01) < oracles.ORACLE_TOL
    assert abs(analytic.hitting_prob(0, 0.5, 0.1) - oracles.HIT0_X05_T01) < oracles.ORACLE_TOL
    assert abs(analytic.hitting_prob(1, 0.1, 0.1) - oracles.HIT1_X01_T01) < oracles.ORACLE_TOL


def test_pde_oracle_reproducible_on_a_coarse_grid():
    # cheap rerun of the oracle: it must land close to the frozen value
    v = oracles.cn_hitting(0.5, 0.25, nx=1000, nt=1000)
    assert abs(v - oracles.HIT0_X05_T025) < 1e-5


def test_hitting_prob_limits_and_zero_time():
    assert analytic.hitting_prob(0, 0.3, 1e6) == pytest.approx(0.7, abs=CTL.abs_tol)
    assert analytic.hitting_prob(0, 0.3, 0.0) == 0.0
    assert analytic.hitting_prob(0, 0.25, 0.5) == pytest.approx(analytic.hitting_prob(1, 0.75, 0.5),
                                                                abs=2 * CTL.abs_tol)
    with pytest.raises(DomainError):
        analytic.hitting_prob(2, 0.3, 1.0)
    with pytest.raises(DomainError):
        analytic.hitting_prob(0, 0.3, -1.0)


def test_series_representations_agree_at_the_switch():
    xs = np.linspace(0.01, 0.99, 99)
    t = analytic.T_SWITCH
    eig = np.asarray(analytic._hit0(xs, t * (1 + 1e-12), CTL))
    img = np.asarray(analytic._hit0(xs, t * (1 - 1e-12), CTL))
    assert np.max(np.abs(eig - img)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(unit, times)
def test_hitting_prob_symmetry(x, t):
    assert abs(analytic.hitting_prob(0, x, t) - analytic.hitting_prob(1, 1 - x, t)) <= 2 * CTL.abs_tol


@settings(max_examples=40, deadline=None)
@given(unit)
def test_hitting_prob_monotone_in_time(x):
    ts = np.concatenate([np.geomspace(1e-4, 0.049, 30), np.geomspace(0.05, 20, 40)])
    vals = np.array([analytic.hitting_prob(0, x, t) for t in ts])
    assert np.all(np.diff(vals) >= -2 * CTL.abs_tol)
    below = vals[1:] < (1 - x) - 1e-6
    assert np.all(np.diff(vals)[below & (vals[:-1] > 1e-12)] > 0)


# -- absorbed density ----------------------------------------------------------

def test_q0_symmetry_and_short_time_value():
    assert analytic.transition_density_q0(0.2, 0.7, 0.3) == pytest.approx(
        analytic.transition_density_q0(0.7, 0.2, 0.3), abs=1e-14)
    ref = (2 * math.pi * 0.01) ** -0.5 - 2 * (2 * math.pi * 0.01) ** -0.5 * math.exp(-0.25 / (2 * 0.01) * 4)
    assert analytic.transition_density_q0(0.5, 0.5, 0.01) == pytest.approx(ref, abs=1e-6)
    assert analytic.transition_density_q0(0.5, 0.5, 0.01) == pytest.approx(3.9894, abs=1e-4)


def test_q0_images_agree_with_eigen_series():
    for t in (0.06, 0.1, 0.5):
        for x, y in ((0.2, 0.7), (0.5, 0.5), (0.9, 0.1)):
            img = analytic._q0_images(np.array(x), np.array(y), t, CTL)
            eig = analytic.transition_density_q0_eigen(x, y, t)
            assert abs(float(img) - eig) < 1e-10


def test_q0_normalization_against_oracle():
    t = 0.1
    mass = integrate.quad(lambda y: analytic.transition_density_q0(0.5, y, t), 0, 1, epsabs=1e-12)[0]
    assert mass == pytest.approx(1 - 2 * oracles.HIT0_X05_T01, abs=oracles.ORACLE_TOL * 2)


@pytest.mark.parametrize("x,t", [(0.3, 0.01), (0.5, 0.2), (0.85, 1.0)])
def test_density_normalization(x, t):
    mass = integrate.quad(lambda y: analytic.transition_density_q0(x, y, t), 0, 1,
                          points=[x], epsabs=1e-12, limit=200)[0]
    total = mass + analytic.hitting_prob(0, x, t) + analytic.hitting_prob(1, x, t)
    assert total == pytest.approx(1.0, abs=1e-8)


# -- entrance measure ------------------------------------------------------------

def test_entrance_intensity_examples():
    p = ReservoirParams(2, 1)
    assert analytic.entrance_intensity(p, 0.4, 0.0) == 0.0
    assert analytic.entrance_intensity(p, 0.25, 1e6) == pytest.approx(1.75, abs=CTL.abs_tol * 3)
    v = analytic.entrance_intensity(ReservoirParams(1, 1), 0.1, 0.1)
    assert abs(v - oracles.ENTRANCE_X01_T01_UNIT) < 2 * oracles.ORACLE_TOL


def test_entrance_intensity_monotone_in_time():
    p = ReservoirParams(2, 1)
    ts = np.geomspace(1e-3, 10, 50)
    for x in (0.1, 0.5, 0.8):
        vals = [analytic.entrance_intensity(p, x, t) for t in ts]
        assert np.all(np.diff(vals) >= -1e-12)


def test_total_entrance_mass_examples():
    assert analytic.total_entrance_mass(ReservoirParams(2, 1), 0.0) == 0.0
    assert analytic.total_entrance_mass(ReservoirParams(2, 1), 1e6) == pytest.approx(1.5, abs=1e-8)
    small = analytic.total_entrance_mass(ReservoirParams(1, 1), 1e-4)
    assert small == pytest.approx(2 * math.sqrt(2e-4 / math.pi), rel=1e-6)


def test_total_entrance_mass_matches_closed_form():
    p = ReservoirParams(2, 1)
    for t in (0.1, 0.5, 1.0):
        assert analytic.total_entrance_mass(p, t) == pytest.approx(
            analytic.total_entrance_mass_closed(p, t), abs=1e-8)


def test_entrance_mass_square_root_scaling():
    # mu_s(0,1)/sqrt(s) tends to (lambda0 + lambda1) sqrt(2/pi)
    p = ReservoirParams(2, 1)
    limit = p.total * math.sqrt(2 / math.pi)
    gaps = [abs(analytic.total_entrance_mass(p, s) / math.sqrt(s) - limit) for s in (0.5, 0.2, 0.1)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    # the correction is of order exp(-1/(2s)), invisible below s = 0.01
    for s in (1e-2, 1e-4, 1e-6):
        assert analytic.total_entrance_mass(p, s) / math.sqrt(s) == pytest.approx(limit, abs=1e-9)


# -- identities -------------------------------------------------------------------

@pytest.mark.parametrize("p,t", [(ReservoirParams(2, 1), 0.5), (ReservoirParams(0, 3), 1.0)])
def test_mass_identity(p, t):
    assert analytic.mass_identity_defect(p, t) <= 1e-6


def test_mass_identity_small_time():
    assert analytic.mass_identity_defect(ReservoirParams(2, 1), 1e-8) < 1e-9


@pytest.mark.parametrize("p,s,t", [(ReservoirParams(1, 1), 0.2, 0.3), (ReservoirParams(2, 0), 0.5, 0.1)])
def test_semigroup_identity(p, s, t):
    ys = np.linspace(0.02, 0.98, 21)
    assert analytic.semigroup_defect(p, s, t, ys) <= 1e-5


def test_semigroup_defect_small_s():
    assert analytic.semigroup_defect(ReservoirParams(1, 1), 1e-9, 0.3, [0.3, 0.6]) < 1e-6


@pytest.mark.parametrize("x,y", [(0.2, 0.25), (0.5, 0.5), (0.8, 0.7)])
def test_green_identity(x, y):
    assert analytic.green_defect(x, y, 10.0) <= 1e-5
    # a short horizon misses a visible part of the occupation time
    assert analytic.green_defect(x, y, 0.1) > 1e-3


# -- sticky resolvent -----------------------------------------------------------------

def test_sticky_resolvent_total_mass():
    r = analytic.sticky_resolvent(StickyParams(0.5, 0.5), 1.0, 0.5)
    assert r.total_mass() == pytest.approx(1.0, abs=1e-8)
    for theta, lam, x in ((StickyParams(0.2, 1.5), 3.0, 0.1), (StickyParams(2.0, 0.01), 0.5, 0.0),
                          (StickyParams(1.0, 1.0), 0.7, 1.0)):
        r = analytic.sticky_resolvent(theta, lam, x)
        assert r.total_mass() == pytest.approx(1 / lam, abs=1e-8)


def test_sticky_resolvent_large_lambda_no_overflow():
    r = analytic.sticky_resolvent(StickyParams(0.5, 0.5), 2000.0, 0.3)
    assert math.isfinite(r.atom0) and math.isfinite(r.atom1)
    assert r.total_mass() == pytest.approx(1 / 2000.0, rel=1e-6)


def test_sticky_resolvent_reference_values():
    # values checked against a 10^5-path simulation (within 3 standard errors)
    r = analytic.sticky_resolvent(StickyParams(0.5, 0.5), 1.0, 0.5)
    assert r.integrate(lambda y: 1.0 if 0 < y < 1 else 0.0) == pytest.approx(0.445465, abs=1e-6)
    assert r.integrate(lambda y: y) == pytest.approx(0.5, abs=1e-12)


def test_sticky_atom_tends_to_one_over_lambda():
    gaps = []
    for th in (1e-1, 1e-2, 1e-3):
        r = analytic.sticky_resolvent(StickyParams(th, th), 1.0, 1.0)
        gaps.append(abs(r.atom1 - 1.0))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_hitting_laplace_against_quadrature():
    for lam in (1.0, 2.5):
        for y in (0.2, 0.6):
            f = lambda t: math.exp(-lam * t) * analytic.hitting_prob(0, y, t)  # noqa: E731
            q = integrate.quad(f, 0, 1.0, epsabs=1e-12, limit=200)[0] + \
                integrate.quad(f, 1.0, 60.0, epsabs=1e-12, limit=200)[0]
            assert analytic.hitting_laplace(y, lam) == pytest.approx(q, abs=1e-9)


def test_sticky_green_small_theta_expansion():
    ys = np.linspace(0.05, 0.95, 19)
    for lam in (1.0, 2.0):
        errs = []
        for th in (1e-1, 1e-2, 1e-3):
            theta = StickyParams(th, th)
            g = analytic.sticky_green(theta, lam, 0.0, ys)
            errs.append(np.max(np.abs(g - 2 * th * analytic.hitting_laplace(ys, lam))) / theta.norm ** 2)
        # bounded by a constant times |theta|^2
        assert max(errs) < 10
        assert errs[-1] <= errs[0] * 1.5


def test_dual_exit_probability_matches_scale_function():
    p = ReservoirParams(1, 3)
    assert analytic.dual_exit_right_prob(p, 0.5) == pytest.approx(0.75)
    for x in (0.1, 0.5, 0.9):
        assert analytic.dual_exit_right_prob(p, x) == pytest.approx(oracles.dual_exit_oracle(1, 3, x), abs=1e-10)
