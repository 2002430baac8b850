import numpy as np
import pytest
from hypothesis import given, strategies as st

from brownian_gas.configuration import Configuration, bin_count_matrix
from brownian_gas.errors import DomainError

positions = st.lists(st.floats(min_value=1e-12, max_value=1 - 1e-12), max_size=30)


def test_positions_sorted_and_frozen():
    c = Configuration([0.7, 0.2, 0.5])
    assert c.positions.tolist() == [0.2, 0.5, 0.7]
    with pytest.raises(ValueError):
        c.positions[0] = 0.1


@pytest.mark.parametrize("bad", [[0.0], [1.0], [0.5, 1.2], [np.nan]])
def test_positions_must_be_interior(bad):
    with pytest.raises(DomainError):
        Configuration(bad)


def test_counts_and_mass():
    c = Configuration([0.1, 0.25, 0.5, 0.75])
    assert len(c) == 4
    assert c.count_in(0.25, 0.75) == 3
    assert c.count_in(0.25, 0.75, closed=False) == 1
    assert c.mass() == pytest.approx(0.09 + 0.1875 + 0.25 + 0.1875)
    assert c.mass(lambda x: np.ones_like(x)) == 4
    assert c.bin_counts([0, 0.5, 1]).tolist() == [2, 2]
    assert bin_count_matrix([c, Configuration.empty()], [0, 0.5, 1]).tolist() == [[2, 2], [0, 0]]


def test_union_is_multiset_sum():
    a = Configuration([0.3])
    assert (a + a).positions.tolist() == [0.3, 0.3]
    assert a + Configuration.empty() == a


@given(positions)
def test_text_round_trip_is_exact(xs):
    c = Configuration(xs)
    assert Configuration.from_text(c.to_text()) == c
