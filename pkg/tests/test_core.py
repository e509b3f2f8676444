import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalcircle.core import (
    TWO_PI,
    CirclePoint,
    IntervalSet,
    Partition,
    SeedSpec,
    ValidationError,
    arc_distance,
    interval_set_from_boundaries,
    merge_blocks,
    wrap_angle,
)

angles = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


class TestCircle:
    def test_wrap_range(self):
        for x in [-7.0, 0.0, 1.0, TWO_PI, TWO_PI + 0.5, -1e-18, 123.456]:
            w = wrap_angle(x)
            assert 0.0 <= w < TWO_PI

    def test_arc_distance_basics(self):
        assert arc_distance(0.0, math.pi) == pytest.approx(math.pi)
        assert arc_distance(0.1, TWO_PI - 0.1) == pytest.approx(0.2)
        assert arc_distance(1.234, 1.234) == 0.0

    @given(angles, angles)
    def test_arc_distance_symmetric_bounded(self, x, y):
        d = arc_distance(x, y)
        assert 0.0 <= d <= math.pi + 1e-12
        assert d == pytest.approx(arc_distance(y, x), abs=1e-12)

    @given(angles, angles, angles)
    def test_arc_distance_triangle(self, x, y, z):
        assert arc_distance(x, z) <= arc_distance(x, y) + arc_distance(y, z) + 1e-9

    def test_circle_point_normalises(self):
        p = CirclePoint(-1.0)
        assert 0.0 <= p.angle < TWO_PI
        assert p.distance_to(CirclePoint(TWO_PI - 1.0)) == pytest.approx(0.0, abs=1e-12)


class TestIntervalSet:
    def test_empty_input(self):
        s = IntervalSet.from_arcs([])
        assert s.is_empty and s.arc_count == 0 and s.total_length() == 0.0

    def test_wraparound_arc_canonical(self):
        s = IntervalSet.from_arcs([(6.0, 1.0)])
        assert s.arc_count == 1
        start, length = s.arcs[0]
        assert start == pytest.approx(6.0)
        assert length == pytest.approx(1.0 + TWO_PI - 6.0)
        assert s.contains(0.0) and s.contains(6.2) and s.contains(0.9)
        assert not s.contains(1.0) and not s.contains(3.0)

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError):
            IntervalSet.from_arcs([(0.0, math.pi), (math.pi / 2, 2.0)])

    def test_coincident_endpoints_rejected(self):
        with pytest.raises(ValidationError):
            IntervalSet.from_arcs([(0.0, 1.0), (1.0, 2.0)])
        with pytest.raises(ValidationError):
            IntervalSet.from_arcs([(0.5, 0.5 + 5e-13)])

    def test_normalize_idempotent(self):
        s = IntervalSet.from_arcs([(5.5, 0.7), (1.0, 2.0), (3.0, 4.0)])
        again = IntervalSet.from_arcs([(a, (a + l) % TWO_PI) for a, l in s.arcs])
        assert again == s

    def test_absorbing_states(self):
        assert IntervalSet.empty().is_empty
        assert IntervalSet.full_circle().is_full
        assert IntervalSet.full_circle().contains(3.3)
        assert not IntervalSet.empty().contains(3.3)
        assert IntervalSet.full_circle().total_length() == pytest.approx(TWO_PI)

    def test_endpoints_roles_alternate(self):
        s = IntervalSet.from_arcs([(1.0, 2.0), (3.0, 4.5), (5.9, 0.3)])
        ang, role = s.endpoints()
        assert len(ang) == 6
        assert np.all(np.diff(ang) > 0)
        assert np.all(role[:-1] != role[1:]) and role[-1] != role[0]
        rebuilt = interval_set_from_boundaries(ang, role)
        assert rebuilt == s

    def test_contains_open(self):
        s = IntervalSet.from_arcs([(1.0, 2.0)])
        assert not s.contains(1.0) and not s.contains(2.0)
        assert s.contains(1.5)


class TestPartition:
    def test_single_pairwise_merge(self):
        p = Partition.singletons(3)
        assert merge_blocks(p, 0, 1).block_min == (0, 0, 2)

    def test_merge_idempotent_on_same_block(self):
        p = Partition.from_blocks(3, [[0, 1], [2]])
        assert p.merge(0, 1) == p

    def test_transitive_union(self):
        p = Partition.from_blocks(4, [[0, 2], [1, 3]])
        assert p.merge(2, 3).block_min == (0, 0, 0, 0)

    def test_merge_decrements_block_count_by_one(self):
        p = Partition.singletons(5)
        q = p.merge(1, 4)
        assert p.block_count - q.block_count == 1

    def test_index_errors(self):
        p = Partition.singletons(3)
        with pytest.raises(IndexError):
            p.merge(0, 3)
        with pytest.raises(IndexError):
            p.merge(-1, 0)

    def test_invalid_labels_rejected(self):
        with pytest.raises(ValidationError):
            Partition(3, (0, 2, 2))  # label 2 at index 1 is not minimal
        with pytest.raises(ValidationError):
            Partition(3, (1, 1, 2))  # not idempotent at 0

    @given(
        st.integers(min_value=1, max_value=40),
        st.lists(st.tuples(st.integers(0, 39), st.integers(0, 39)), max_size=60),
    )
    @settings(max_examples=200, deadline=None)
    def test_merge_sequences_stay_canonical(self, n, ops):
        p = Partition.singletons(n)
        prev_blocks = p.block_count
        for i, j in ops:
            same = p.same_block(i % n, j % n)
            p = p.merge(i % n, j % n)
            bm = p.block_min
            # canonical: idempotent labels, each label at most the index
            assert all(bm[g] == g for g in bm)
            assert all(g <= i for i, g in enumerate(bm))
            assert p.block_count == prev_blocks - (0 if same else 1)
            prev_blocks = p.block_count
        assert int(p.block_sizes().sum()) == n
        assert p.frequencies().sum() == pytest.approx(1.0, abs=1e-12)

    def test_blocks_round_trip(self):
        p = Partition.from_blocks(6, [[0, 3], [1, 2, 5], [4]])
        assert Partition.from_blocks(6, p.blocks()) == p
        assert p.block_sizes().tolist() == [3, 2, 1]


class TestSeedSpec:
    def test_same_pair_bit_identical(self):
        a = SeedSpec(7, 3).generator().random(32)
        b = SeedSpec(7, 3).generator().random(32)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = SeedSpec(7, 3).generator().random(32)
        b = SeedSpec(7, 4).generator().random(32)
        c = SeedSpec(8, 3).generator().random(32)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_tags_give_independent_blocks(self):
        a = SeedSpec(7, 3).generator(tag=1).random(32)
        b = SeedSpec(7, 3).generator(tag=2).random(32)
        assert not np.array_equal(a, b)
