"""Sum tree used by the Gillespie path."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from savanna_coexistence.ratetree import RateTree


def test_total_is_the_sum_of_leaves():
    tree = RateTree([1.0, 2.0, 0.0, 4.5, 0.5])
    assert tree.total == pytest.approx(8.0)
    assert tree[3] == 4.5
    assert list(tree.leaves()) == [1.0, 2.0, 0.0, 4.5, 0.5]


def test_negative_rates_are_rejected():
    with pytest.raises(ValueError):
        RateTree([1.0, -0.1])


def test_update_refreshes_ancestors():
    tree = RateTree(np.ones(9))
    tree.update([0, 8], [3.0, 0.0])
    assert tree.total == pytest.approx(10.0)
    assert tree[0] == 3.0
    assert tree[8] == 0.0


def test_sample_picks_the_interval_containing_u():
    """Cumulative intervals are [0,1), [1,3), [3,3), [3,7)."""
    tree = RateTree([1.0, 2.0, 0.0, 4.0])
    assert tree.sample(0.0) == 0
    assert tree.sample(0.99 / 7) == 0
    assert tree.sample(1.5 / 7) == 1
    assert tree.sample(3.5 / 7) == 3
    assert tree.sample(0.999999) == 3


def test_sample_never_returns_a_zero_rate_leaf():
    tree = RateTree([0.0, 5.0, 0.0, 0.0, 0.0])
    for u in np.linspace(0.0, 0.999999, 50):
        assert tree.sample(float(u)) == 1


def test_sampling_frequencies_follow_rates(rng):
    rates = np.array([0.5, 1.0, 2.5, 0.0, 1.0])
    tree = RateTree(rates)
    counts = np.bincount([tree.sample(float(rng.random())) for _ in range(20_000)], minlength=5)
    expected = rates / rates.sum() * 20_000
    sd = np.sqrt(expected * (1 - rates / rates.sum())) + 1e-9
    assert np.all(np.abs(counts - expected) <= 5 * sd)


@given(
    st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=64),
    st.data(),
)
def test_updates_keep_the_root_equal_to_the_leaf_sum(values, data):
    tree = RateTree(values)
    i = data.draw(st.integers(0, len(values) - 1))
    v = data.draw(st.floats(0, 100, allow_nan=False))
    tree.update([i], [v])
    assert tree.total == pytest.approx(float(tree.leaves().sum()), rel=1e-12, abs=1e-12)
