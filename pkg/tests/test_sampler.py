import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rif.errors import AllZero, OutOfRange
from rif.sampler import WeightedIndex

from oracles import linear_scan_sample


def test_example():
    assert WeightedIndex.build([1.0, 2.0, 3.0]).sample(0.5) == 2
    assert WeightedIndex.build([1.0, 2.0, 3.0]).sample(0.0) == 0


def test_zero_weights_never_sampled():
    idx = WeightedIndex.build([0.0, 1.0, 0.0, 0.0, 2.0, 0.0])
    for u in np.linspace(0, 0.999999, 1001):
        assert idx.sample(u) in (1, 4)


@settings(max_examples=300, deadline=None)
@given(w=st.lists(st.floats(0, 1e3), min_size=1, max_size=64).filter(lambda w: sum(w) > 0),
       u=st.floats(0, 1, exclude_max=True))
def test_matches_linear_scan(w, u):
    idx = WeightedIndex.build(w)
    got = idx.sample(u)
    assert w[got] > 0
    want = linear_scan_sample(w, u)
    if got != want:
        # only a rounding tie at a prefix boundary may separate the two
        lo = math.fsum(w[: min(got, want) + 1])
        assert abs(lo - u * math.fsum(w)) <= 1e-9 * math.fsum(w)


@settings(max_examples=100, deadline=None)
@given(ops=st.lists(st.tuples(st.integers(0, 31), st.floats(0, 10)), max_size=80),
       u=st.floats(0, 1, exclude_max=True))
def test_updates_keep_prefix_sums(ops, u):
    w = [1.0] * 32
    idx = WeightedIndex.build(w)
    for i, x in ops:
        w[i] = x
        idx.update(i, x)
    for i in range(0, 33, 4):
        assert abs(idx.prefix(i) - math.fsum(w[:i])) <= 1e-9 * max(1.0, math.fsum(w))
    if sum(w) > 0:
        assert w[idx.sample(u)] > 0
    assert abs(idx.total - math.fsum(w)) <= 1e-9 * max(1.0, math.fsum(w))


def test_append_grows():
    idx = WeightedIndex(8)
    for x in (1.0, 0.0, 3.0):
        idx.append(x)
    assert len(idx) == 3 and idx.total == 4.0
    assert idx.sample(0.3) == 2


def test_frequencies():
    w = np.array([1.0, 2.0, 3.0, 0.0, 4.0])
    idx = WeightedIndex.build(w)
    rng = np.random.default_rng(11)
    n = 200_000
    hits = np.bincount([idx.sample(u) for u in rng.random(n)], minlength=5)
    p = w / w.sum()
    se = np.sqrt(p * (1 - p) / n)
    assert (np.abs(hits / n - p) <= 6 * se + 1e-12).all()


def test_drift_bounded_over_many_updates():
    rng = np.random.default_rng(3)
    n = 1000
    idx = WeightedIndex.build(rng.random(n) * 1e3)
    for i, x in zip(rng.integers(0, n, 10**6), rng.random(10**6) * 1e3):
        idx.update(int(i), float(x))
    exact = math.fsum(idx.vals[:n])
    assert abs(idx.total - exact) <= 1e-9 * exact
    assert abs(idx.prefix(n) - exact) <= 1e-9 * exact


def test_errors():
    with pytest.raises(AllZero):
        WeightedIndex.build([0.0, 0.0])
    idx = WeightedIndex.build([1.0, 1.0])
    with pytest.raises(OutOfRange):
        idx.update(2, 1.0)
    with pytest.raises(ValueError):
        idx.update(0, -1.0)
    with pytest.raises(ValueError):
        idx.sample(1.0)
    idx.update(0, 0.0)
    idx.update(1, 0.0)
    with pytest.raises(AllZero):
        idx.sample(0.2)
    with pytest.raises(OutOfRange):
        WeightedIndex.build([1.0]).append(1.0)


def test_worked_examples():
    assert WeightedIndex.build([1.0, 2.0, 3.0]).total == 6.0
    idx = WeightedIndex.build([0.0, 0.0, 5.0])
    assert idx.total == 5.0 and {idx.sample(u) for u in (0.0, 0.4, 0.99)} == {2}
    idx = WeightedIndex.build([1.0, 2.0, 3.0])
    idx.update(1, 5.0)
    assert idx.total == 9.0
    assert {WeightedIndex.build([0.0, 7.0, 0.0]).sample(u) for u in (0.0, 0.5, 0.999)} == {1}


def test_dead_entry_never_sampled():
    idx = WeightedIndex.build([1.0, 1.0, 1.0])
    idx.update(1, 0.0)
    assert all(idx.sample(u) != 1 for u in np.linspace(0, 0.9999, 5000))
