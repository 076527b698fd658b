"""Core value types: boxes, datasets, decompositions, parameters, rng streams."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebo.core import (
    Box,
    Dataset,
    Decomposition,
    RngStream,
    TileParams,
    ValidationError,
    validate_dataset,
)


# ---------------------------------------------------------------------------
# Box
# ---------------------------------------------------------------------------


class TestBox:
    def test_basic_geometry(self):
        b = Box([0.0, 1.0], [2.0, 4.0])
        assert b.ndim == 2
        np.testing.assert_allclose(b.sides, [2.0, 3.0])
        assert b.volume == 6.0
        assert b.length == 5.0
        np.testing.assert_allclose(b.center, [1.0, 2.5])

    def test_rejects_degenerate_or_inverted_sides(self):
        with pytest.raises(ValidationError):
            Box([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ValidationError):
            Box([0.0], [0.0])
        with pytest.raises(ValidationError):
            Box([1.0], [0.0])

    def test_rejects_non_finite_and_empty(self):
        with pytest.raises(ValidationError):
            Box([0.0], [np.inf])
        with pytest.raises(ValidationError):
            Box([np.nan], [1.0])
        with pytest.raises(ValidationError):
            Box([], [])

    def test_bounds_are_read_only(self):
        b = Box([0.0], [1.0])
        with pytest.raises(ValueError):
            b.lower[0] = 5.0

    def test_contains_single_and_batch(self):
        b = Box([0.0, 0.0], [1.0, 1.0])
        assert b.contains(np.array([0.5, 0.5]))
        assert b.contains(np.array([1.0, 1.0]))  # closed at the boundary
        assert not b.contains(np.array([1.1, 0.5]))
        out = b.contains(np.array([[0.5, 0.5], [2.0, 0.0]]))
        assert out.tolist() == [True, False]

    def test_contains_eps_expansion(self):
        b = Box([0.0], [1.0])
        assert not b.contains(np.array([1.05]))
        assert b.contains(np.array([1.05]), eps=0.1)

    def test_expand(self):
        b = Box([0.0], [1.0]).expand(0.5)
        np.testing.assert_allclose(b.lower, [-0.5])
        np.testing.assert_allclose(b.upper, [1.5])
        with pytest.raises(ValidationError):
            Box([0.0], [1.0]).expand(-0.1)

    def test_clip(self):
        b = Box([0.0, 0.0], [1.0, 1.0])
        np.testing.assert_allclose(
            b.clip(np.array([[-1.0, 0.5], [0.5, 2.0]])),
            [[0.0, 0.5], [0.5, 1.0]],
        )

    def test_split(self):
        b = Box([0.0, 0.0], [1.0, 2.0])
        left, right = b.split(1, 0.5)
        np.testing.assert_allclose(left.upper, [1.0, 0.5])
        np.testing.assert_allclose(right.lower, [0.0, 0.5])
        assert left.volume + right.volume == pytest.approx(b.volume)
        with pytest.raises(ValidationError):
            b.split(0, 0.0)  # boundary cut is not interior
        with pytest.raises(ValidationError):
            b.split(0, 1.5)

    def test_uniform_shapes_and_bounds(self):
        b = Box([1.0, -1.0], [2.0, 3.0])
        g = np.random.default_rng(0)
        x = b.uniform(g)
        assert x.shape == (2,)
        X = b.uniform(g, 100)
        assert X.shape == (100, 2)
        assert np.all(b.contains(X))


# ---------------------------------------------------------------------------
# Dataset and validation
# ---------------------------------------------------------------------------


class TestDataset:
    def test_shapes_and_accessors(self):
        ds = Dataset([[0.0, 1.0], [2.0, 3.0]], [1.0, -1.0])
        assert ds.n == 2
        assert ds.ndim == 2
        x, y = ds.best()
        np.testing.assert_allclose(x, [0.0, 1.0])
        assert y == 1.0

    def test_row_count_mismatch(self):
        with pytest.raises(ValidationError):
            Dataset([[0.0], [1.0]], [1.0])

    def test_empty_and_append(self):
        ds = Dataset.empty(3)
        assert ds.n == 0 and ds.ndim == 3
        ds2 = ds.append([[1.0, 2.0, 3.0]], [5.0])
        assert ds2.n == 1
        assert ds.n == 0  # original untouched
        with pytest.raises(ValidationError):
            ds2.append([[1.0, 2.0]], [0.0])

    def test_subset(self):
        ds = Dataset([[0.0], [1.0], [2.0]], [0.0, 1.0, 2.0])
        sub = ds.subset([2, 0])
        np.testing.assert_allclose(sub.X[:, 0], [2.0, 0.0])

    def test_best_of_empty_raises(self):
        with pytest.raises(ValidationError):
            Dataset.empty(1).best()

    def test_csv_round_trip(self, tmp_path):
        ds = Dataset([[0.1, 0.2], [1.0 / 3.0, 0.7]], [1.5, -2.25])
        path = tmp_path / "data.csv"
        ds.to_csv(path)
        back = Dataset.from_csv(path)
        # repr() floats round-trip exactly
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)

    def test_csv_header_contract(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValidationError):
            Dataset.from_csv(path)


class TestValidateDataset:
    def test_interior_point_ok(self):
        box = Box([0.0, 0.0], [1.0, 1.0])
        validate_dataset(Dataset([box.center], [0.0]), box)

    def test_boundary_point_ok(self):
        box = Box([0.0, 0.0], [1.0, 1.0])
        validate_dataset(Dataset([[0.5, 1.0]], [0.0]), box)

    def test_out_of_bounds_reports_row(self):
        box = Box([0.0, 0.0], [1.0, 1.0])
        ds = Dataset([[0.5, 0.5], [0.5, 1.1]], [0.0, 0.0])
        with pytest.raises(ValidationError, match="row 1"):
            validate_dataset(ds, box)

    def test_eps_relaxation_and_monotonicity(self):
        box = Box([0.0], [1.0])
        ds = Dataset([[1.05]], [0.0])
        with pytest.raises(ValidationError):
            validate_dataset(ds, box, eps=0.0)
        validate_dataset(ds, box, eps=0.05)
        validate_dataset(ds, box, eps=0.2)  # monotone in eps

    def test_non_finite_observation(self):
        box = Box([0.0], [1.0])
        with pytest.raises(ValidationError, match="observation 0"):
            validate_dataset(Dataset([[0.5]], [np.nan]), box)

    def test_dimension_mismatch(self):
        box = Box([0.0], [1.0])
        with pytest.raises(ValidationError):
            validate_dataset(Dataset([[0.5, 0.5]], [0.0]), box)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


class TestDecomposition:
    def test_single_group(self):
        assert Decomposition([0, 0, 0]).groups == ((0, 1, 2),)

    def test_two_groups(self):
        assert Decomposition([0, 1, 0]).groups == ((0, 2), (1,))

    def test_empty_group_dropped_and_ordered_by_index(self):
        z = Decomposition([2, 2, 1])
        assert z.groups == ((2,), (0, 1))
        assert z.group_ids == (1, 2)
        assert z.n_groups == 2

    def test_members_and_group_of(self):
        z = Decomposition([0, 1, 0])
        assert z.group_of(2) == 0
        assert z.members(0) == (0, 2)
        assert z.members(1) == (1,)

    def test_replace(self):
        z = Decomposition([0, 1, 0]).replace(2, 1)
        assert z.assignment == (0, 1, 1)

    def test_validation(self):
        with pytest.raises(ValidationError):
            Decomposition([])
        with pytest.raises(ValidationError):
            Decomposition([-1])
        with pytest.raises(ValidationError):
            Decomposition([0, 3], max_groups=2)

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=8))
    def test_groups_partition_dimensions(self, asg):
        z = Decomposition(asg, max_groups=6)
        seen = [d for g in z.groups for d in g]
        assert sorted(seen) == list(range(len(asg)))

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=8))
    def test_relabel_round_trip(self, asg):
        # Rebuilding an assignment from the groups preserves co-membership.
        z = Decomposition(asg, max_groups=6)
        rebuilt = np.empty(z.ndim, dtype=int)
        for label, dims in enumerate(z.groups):
            for d in dims:
                rebuilt[list(dims)] = label
        a = np.asarray(asg)
        same_orig = a[:, None] == a[None, :]
        same_new = rebuilt[:, None] == rebuilt[None, :]
        assert np.array_equal(same_orig, same_new)


# ---------------------------------------------------------------------------
# TileParams
# ---------------------------------------------------------------------------


class TestTileParams:
    def make(self, **kw):
        z = Decomposition([0, 1])
        k = np.full((2, 3), 2)
        return TileParams(z, k, **kw)

    def test_defaults(self):
        p = self.make()
        assert p.n_layers == 3
        assert p.noise == 0.01
        assert p.feature_kind == "tile"
        np.testing.assert_allclose(p.group_concentration, [1.0, 1.0])

    def test_concentration_broadcast(self):
        p = self.make(group_concentration=2.5)
        np.testing.assert_allclose(p.group_concentration, [2.5, 2.5])

    def test_validation(self):
        z = Decomposition([0, 1])
        with pytest.raises(ValidationError):
            TileParams(z, np.full((3, 2), 1))  # wrong dim count
        with pytest.raises(ValidationError):
            TileParams(z, np.empty((2, 0), dtype=int))  # no layers
        with pytest.raises(ValidationError):
            TileParams(z, np.full((2, 2), -1))
        with pytest.raises(ValidationError):
            self.make(noise=0.0)
        with pytest.raises(ValidationError):
            self.make(group_concentration=0.0)
        with pytest.raises(ValidationError):
            self.make(cut_prior_shape=0.0)
        with pytest.raises(ValidationError):
            self.make(cut_prior_rate=-1.0)
        with pytest.raises(ValidationError):
            self.make(feature_kind="fourier")

    def test_with_cut_counts(self):
        p = self.make()
        q = p.with_cut_counts(np.full((2, 3), 7))
        assert q.cut_counts[0, 0] == 7
        assert q.noise == p.noise
        assert p.cut_counts[0, 0] == 2

    def test_with_decomposition(self):
        p = self.make()
        q = p.with_decomposition(Decomposition([0, 0]))
        assert q.decomposition.groups == ((0, 1),)
        assert np.array_equal(q.cut_counts, p.cut_counts)


# ---------------------------------------------------------------------------
# RngStream
# ---------------------------------------------------------------------------


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(7).child("iter", 3).generator().random(5)
        b = RngStream(7).child("iter", 3).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_children_differ(self):
        root = RngStream(7)
        a = root.child("iter", 1).generator().random(5)
        b = root.child("iter", 2).generator().random(5)
        assert not np.array_equal(a, b)

    def test_string_and_int_ids(self):
        root = RngStream(0)
        assert root.child("init").ids == root.child("init").ids
        assert root.child("init").ids != root.child("iter").ids
        with pytest.raises(ValidationError):
            root.child(3.5)

    def test_generator_restarts_at_stream_origin(self):
        s = RngStream(1).child(4)
        g1 = s.generator()
        g1.random(100)
        g2 = s.generator()
        np.testing.assert_array_equal(g2.random(3), RngStream(1).child(4).generator().random(3))
