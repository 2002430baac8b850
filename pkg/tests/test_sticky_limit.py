import csv

import numpy as np
import pytest
from scipy import stats as st

from brownian_gas import analytic, gas, sticky_limit as sl
from brownian_gas.analytic import ReservoirParams, StickyParams
from brownian_gas.configuration import Configuration, bin_count_matrix
from brownian_gas.errors import CapacityError, DomainError
from brownian_gas.paths import Path, RngStream, TimeGrid, sample_sticky_path
from brownian_gas.stats import mc_mean

QUARTERS = [0.0, 0.25, 0.5, 0.75, 1.0]


# -- initial arrays -------------------------------------------------------------------

def test_array_from_empty_configuration():
    arr = sl.build_initial_array(Configuration.empty(), 10)
    assert (arr.interior.size, arr.n_at_zero, arr.n_at_one) == (0, 5, 5)


def test_array_keeps_interior_particles():
    arr = sl.build_initial_array(Configuration([0.5]), 11, 0.1)
    assert arr.interior.tolist() == [0.5]
    assert (arr.n_at_zero, arr.n_at_one) == (5, 5)
    arr = sl.build_initial_array(Configuration([0.05, 0.5]), 10, 0.1)
    assert arr.interior.tolist() == [0.5]
    assert (arr.n_at_zero, arr.n_at_one) == (4, 5)
    assert arr.starts.size == 10


def test_array_errors():
    with pytest.raises(CapacityError):
        sl.build_initial_array(Configuration([0.3, 0.4, 0.5]), 2, 0.1)
    with pytest.raises(DomainError):
        sl.build_initial_array(Configuration.empty(), 0)
    with pytest.raises(DomainError):
        sl.build_initial_array(Configuration.empty(), 10, 0.5)
    assert sl.default_a_n(100) == pytest.approx(0.1)


def test_reservoirs_must_be_active():
    arr = sl.build_initial_array(Configuration.empty(), 4)
    with pytest.raises(DomainError):
        sl.simulate_system(RngStream(1), ReservoirParams(0.0, 1.0), arr, TimeGrid.over(0.1, 1e-2))


# -- single systems -------------------------------------------------------------------------

def test_single_particle_system_is_a_sticky_path():
    p = ReservoirParams(0.7, 1.3)
    arr = sl.TriangularArray(1, np.array([0.4]), 0, 0)
    g = TimeGrid.over(0.5, 1e-2)
    sys_path = sl.simulate_system(RngStream(2), p, arr, g)[0]
    ref = sample_sticky_path(RngStream(2), StickyParams(0.7, 1.3), 0.4, g)
    assert np.array_equal(sys_path.values, ref.values)


def test_empirical_counts():
    g = TimeGrid.over(1.0, 0.5)
    ends = [Path(g, np.array([0.0, 0.0, 0.0])), Path(g, np.array([1.0, 1.0, 1.0]))]
    assert sl.empirical_counts(ends, 1.0, QUARTERS) == [0, 0, 0, 0]
    mixed = ends + [Path(g, np.array([0.3, 0.6, 0.1]))]
    assert sl.empirical_counts(mixed, 0.5, QUARTERS) == [0, 0, 1, 0]
    with pytest.raises(DomainError):
        sl.empirical_counts(mixed, 0.3, QUARTERS)


def test_endpoint_occupancy_is_balanced():
    p = ReservoirParams(1.0, 1.0)
    arr = sl.build_initial_array(Configuration([0.3, 0.7]), 400)
    rc = sl.simulate_replicas(RngStream(3), p, arr, 0.5, 200)
    parked = 400 - rc.totals
    frac = rc.at_zero / parked
    assert abs(frac.mean() - 0.5) <= 0.1


# -- convergence to the gas ----------------------------------------------------------------------

def test_bin_means_match_the_gas():
    p = ReservoirParams(2.0, 1.0)
    omega = Configuration([0.3, 0.6])
    t = 0.3
    gas_counts = bin_count_matrix(
        gas.sample_transition_batch(RngStream(4), p, [omega] * 4000, t, 1e-3), QUARTERS)
    rc = sl.simulate_replicas(RngStream(5), p, sl.build_initial_array(omega, 400), t, 2000)
    for b in range(4):
        m1, s1 = mc_mean(gas_counts[:, b])
        m2, s2 = mc_mean(rc.counts[:, b])
        assert abs(m1 - m2) <= 3 * np.hypot(s1, s2) + 0.03


@pytest.mark.parametrize("n", [100, 200, 400])
def test_interior_count_stays_bounded(n):
    p = ReservoirParams(2.0, 1.0)
    rc = sl.simulate_replicas(RngStream(6).child(n), p, sl.build_initial_array(Configuration.empty(), n),
                              0.5, 1000)
    m, se = mc_mean(rc.totals)
    assert m <= analytic.total_entrance_mass(p, 0.5) + 3 * se + 0.1


def _tv_to_poisson(totals, mean):
    k = np.arange(totals.max() + 1)
    emp = np.bincount(totals, minlength=k.size) / totals.size
    pmf = st.poisson.pmf(k, mean)
    return 0.5 * (np.abs(emp - pmf).sum() + st.poisson.sf(k[-1], mean))


def test_total_variation_shrinks_with_n():
    p = ReservoirParams(1.0, 1.0)
    target = analytic.total_entrance_mass(p, 0.5)
    tvs = []
    for n in (4, 32, 256):
        rc = sl.simulate_replicas(RngStream(7).child(n), p, sl.build_initial_array(Configuration.empty(), n),
                                  0.5, 4000)
        tvs.append(_tv_to_poisson(rc.totals, target))
    # sampling noise in the distance is about 0.02 at 4000 replicas
    assert tvs[1] <= tvs[0] + 0.04
    assert tvs[2] <= tvs[1] + 0.04
    assert tvs[2] < tvs[0]


def test_replicas_are_reproducible_and_export(tmp_path):
    p = ReservoirParams(1.0, 2.0)
    arr = sl.build_initial_array(Configuration([0.5]), 20)
    a = sl.simulate_replicas(RngStream(8), p, arr, 0.2, 30, batch_paths=100)
    b = sl.simulate_replicas(RngStream(8), p, arr, 0.2, 30, batch_paths=100)
    assert np.array_equal(a.counts, b.counts)
    a.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["replica", "bin", "count"]
    assert len(rows) == 1 + 30 * 4
    with pytest.raises(DomainError):
        sl.simulate_replicas(RngStream(8), p, arr, 0.0, 3)
