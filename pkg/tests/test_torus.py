import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from busgame.torus import dx, dy, minimal_distance, reduce


@pytest.mark.parametrize("r, D, expected", [(23, 10, 3), (10, 10, 0), (-2, 10, 8), (0, 10, 0)])
def test_reduce_examples(r, D, expected):
    assert reduce(r, D) == pytest.approx(expected, abs=1e-12)


def test_reduce_rejects_nonpositive_length():
    with pytest.raises(ValueError):
        reduce(1.0, 0.0)
    with pytest.raises(ValueError):
        reduce(1.0, -3.0)


def test_reduce_clamps_value_just_below_length():
    D = 10.0
    assert reduce(-1e-18, D) == 0.0
    assert reduce(math.nextafter(D, 0), D) < D


@pytest.mark.parametrize("x, y, D, ex, ey", [
    (3, 8, 12, 5, 7),
    (8, 3, 12, 7, 5),
    (5, 5, 12, 0, 0),
    (0, 6, 12, 6, 6),
])
def test_directed_distance_examples(x, y, D, ex, ey):
    assert dx(x, y, D) == ex
    assert dy(x, y, D) == ey


@pytest.mark.parametrize("x, y, D, expected", [(0, 1, 10, 1), (0, 5, 10, 5), (9, 2, 10, 3)])
def test_minimal_distance_examples(x, y, D, expected):
    assert minimal_distance(x, y, D) == expected


def test_positions_outside_range_rejected():
    with pytest.raises(ValueError):
        dx(10.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        dy(1.0, -0.5, 10.0)


lengths = st.floats(0.1, 1e4)
fractions = st.floats(0.0, 1.0, exclude_max=True)


@given(lengths, st.floats(-1e6, 1e6))
def test_reduce_lands_in_range(D, r):
    pos = reduce(r, D)
    assert 0.0 <= pos < D


@given(lengths, st.floats(-1e3, 1e3), st.integers(-50, 50))
def test_reduce_is_periodic(D, r, k):
    diff = abs(reduce(r + k * D, D) - reduce(r, D))
    assert min(diff, D - diff) <= 1e-9 * D * (1 + abs(k)) + 1e-12 * abs(r)


@given(lengths, fractions, fractions)
def test_directed_distances_sum_to_length(D, a, b):
    x, y = reduce(a * D, D), reduce(b * D, D)
    if x != y:
        assert dx(x, y, D) + dy(x, y, D) == pytest.approx(D, rel=1e-12)


@given(lengths, fractions, fractions)
def test_label_symmetry_and_half_bound(D, a, b):
    x, y = reduce(a * D, D), reduce(b * D, D)
    assert dx(x, y, D) == dy(y, x, D)
    assert 0.0 <= dx(x, y, D) < D
    assert minimal_distance(x, y, D) <= D / 2


@given(lengths, fractions, fractions, st.floats(-1e3, 1e3))
def test_shift_invariance(D, a, b, r):
    x, y = reduce(a * D, D), reduce(b * D, D)
    xs, ys = reduce(x + r, D), reduce(y + r, D)
    before, after = dx(x, y, D), dx(xs, ys, D)
    # a gap of zero may reappear as a full loop under rounding
    err = min(abs(after - before), D - abs(after - before))
    assert err <= 1e-9 * (D + abs(r))
