import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import det_log_volume, lp_hull_vertices

from apportion.exceptions import (
    AllDegenerate,
    BudgetExceeded,
    DegenerateCloud,
    HullDimensionExceeded,
    RankDeficientWarning,
)
from apportion.geometry import (
    affine_right_inverse,
    hull_vertices,
    intrinsic_projection,
    max_volume_exhaustive,
    max_volume_greedy,
    simplex_log_volume,
)


def triangle_cloud(rng, n, corners=None):
    """Points in a triangle: barycentric mixes plus the corners themselves."""
    if corners is None:
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    weights = rng.dirichlet(np.ones(3), size=n)
    return np.vstack([corners, weights @ corners])


class TestIntrinsicProjection:
    def test_identical_rows_degenerate(self):
        ystar = np.full((5, 3), 1.0 / 3.0)
        with pytest.raises(DegenerateCloud):
            intrinsic_projection(ystar, rank_cap=2)

    def test_identity_rows_span_triangle(self):
        basis, z = intrinsic_projection(np.eye(3), rank_cap=8)
        assert basis.rank == 2
        assert z.shape == (3, 2)
        assert simplex_log_volume(z) > -math.inf

    def test_rank_matches_oracle_on_noiseless_product(self):
        rng = np.random.default_rng(11)
        hstar = rng.dirichlet(np.ones(8), size=3)
        wstar = rng.dirichlet(np.ones(3), size=200)
        ystar = wstar @ hstar
        basis, _ = intrinsic_projection(ystar, rank_cap=8)
        oracle = np.linalg.matrix_rank(ystar[:, :-1] - ystar[:, :-1].mean(axis=0))
        assert basis.rank == oracle == 2

    def test_rank_cap_truncates(self):
        rng = np.random.default_rng(4)
        ystar = rng.dirichlet(np.ones(6), size=40)
        basis, z = intrinsic_projection(ystar, rank_cap=2)
        assert basis.rank == 2 and z.shape[1] == 2

    def test_reconstruction_within_discarded_mass(self):
        rng = np.random.default_rng(5)
        ystar = rng.dirichlet(np.ones(7), size=60)
        reduced = ystar[:, :-1]
        centered = reduced - reduced.mean(axis=0)
        sing = np.linalg.svd(centered, compute_uv=False)
        for cap in (1, 2, 4, 6):
            basis, z = intrinsic_projection(ystar, rank_cap=cap)
            err = np.linalg.norm(centered - z @ basis.basis.T, "fro")
            assert err <= sing[basis.rank :].sum() + 1e-8

    def test_rejects_off_simplex_rows(self):
        with pytest.raises(ValueError):
            intrinsic_projection(np.array([[0.5, 0.6], [0.2, 0.8]]), rank_cap=1)


class TestHullVertices:
    def test_interior_point_excluded(self):
        z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.25, 0.25]])
        assert hull_vertices(z).tolist() == [0, 1, 2]

    def test_corners_recovered_in_dense_triangle(self):
        rng = np.random.default_rng(7)
        z = triangle_cloud(rng, 1000)
        verts = hull_vertices(z)
        assert {0, 1, 2} <= set(verts.tolist())

    def test_one_dimensional_min_max(self):
        z = np.array([[0.1], [0.7], [0.3]])
        assert hull_vertices(z).tolist() == [0, 1]

    def test_collinear_cloud_degenerate(self):
        z = np.column_stack([np.linspace(0, 1, 6), np.linspace(0, 2, 6)])
        with pytest.raises(DegenerateCloud):
            hull_vertices(z)

    def test_dimension_cap(self):
        rng = np.random.default_rng(0)
        with pytest.raises(HullDimensionExceeded):
            hull_vertices(rng.normal(size=(40, 9)))

    @pytest.mark.parametrize("dim,n", [(2, 120), (3, 60)])
    def test_matches_lp_membership_oracle(self, dim, n):
        rng = np.random.default_rng(100 + dim)
        z = rng.normal(size=(n, dim))
        assert hull_vertices(z).tolist() == lp_hull_vertices(z).tolist()

    def test_removing_interior_point_keeps_vertex_set(self):
        rng = np.random.default_rng(21)
        z = rng.normal(size=(40, 2))
        verts = set(hull_vertices(z).tolist())
        interior = next(i for i in range(len(z)) if i not in verts)
        reduced = np.delete(z, interior, axis=0)
        expected = {v if v < interior else v - 1 for v in verts}
        assert set(hull_vertices(reduced).tolist()) == expected


class TestSimplexLogVolume:
    def test_unit_right_triangle(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert simplex_log_volume(verts) == pytest.approx(math.log(0.5), abs=1e-12)

    def test_collinear_is_minus_inf(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        assert simplex_log_volume(verts) == -math.inf

    def test_matches_determinant_oracle_in_3d(self):
        rng = np.random.default_rng(3)
        verts = rng.normal(size=(4, 3))
        edges = verts[1:] - verts[0]
        expected = math.log(abs(np.linalg.det(edges))) - math.log(math.factorial(3))
        assert simplex_log_volume(verts) == pytest.approx(expected, abs=1e-10)

    @settings(deadline=None, max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_and_rigid_motion_invariance(self, seed):
        rng = np.random.default_rng(seed)
        verts = rng.normal(size=(4, 5))
        base = simplex_log_volume(verts)
        perm = rng.permutation(4)
        assert simplex_log_volume(verts[perm]) == pytest.approx(base, abs=1e-9)
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        moved = verts @ q.T + rng.normal(size=5)
        assert simplex_log_volume(moved) == pytest.approx(base, abs=1e-9)


class TestMaxVolumeExhaustive:
    def test_corners_beat_centroid(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0 / 3, 2.0 / 3]])
        assert max_volume_exhaustive(pts, 3).indices == (0, 1, 2)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(12)
        pts = rng.normal(size=(10, 2))
        result = max_volume_exhaustive(pts, 3)
        import itertools

        best = max(
            itertools.combinations(range(10), 3),
            key=lambda c: det_log_volume(pts[list(c)]),
        )
        assert result.indices == best
        assert result.log_volume == pytest.approx(
            det_log_volume(pts[list(best)]), abs=1e-12
        )

    def test_duplicate_corners_lexicographic_tie_break(self):
        pts = np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0]]
        )
        assert max_volume_exhaustive(pts, 3).indices == (0, 1, 2)

    def test_budget_exceeded(self):
        rng = np.random.default_rng(0)
        with pytest.raises(BudgetExceeded):
            max_volume_exhaustive(rng.normal(size=(30, 2)), 3, budget=100)

    def test_all_degenerate(self):
        pts = np.column_stack([np.arange(5.0), np.arange(5.0)])
        with pytest.raises(AllDegenerate):
            max_volume_exhaustive(pts, 3)

    def test_result_independent_of_chunking(self, monkeypatch):
        from apportion import geometry

        rng = np.random.default_rng(61)
        pts = np.vstack(
            [rng.normal(size=(12, 2)), [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]]
        )
        baseline = max_volume_exhaustive(pts, 3)
        for chunk in (1, 3, 7):
            monkeypatch.setattr(geometry, "_BATCH", chunk)
            assert max_volume_exhaustive(pts, 3) == baseline


class TestMaxVolumeGreedy:
    def test_exactly_k_candidates(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        result = max_volume_greedy(pts, 3)
        assert sorted(result.indices) == [0, 1, 2]

    def test_finds_corners_among_interior_points(self):
        rng = np.random.default_rng(9)
        pts = triangle_cloud(rng, 100)
        greedy = max_volume_greedy(pts, 3)
        exhaustive = max_volume_exhaustive(pts, 3)
        assert sorted(greedy.indices) == sorted(exhaustive.indices) == [0, 1, 2]

    @settings(deadline=None, max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 5))
    def test_never_beats_exhaustive(self, seed, k):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(rng.integers(k, 15), k - 1))
        greedy = max_volume_greedy(pts, k)
        exhaustive = max_volume_exhaustive(pts, k)
        assert greedy.log_volume <= exhaustive.log_volume + 1e-12
        assert greedy.log_volume >= exhaustive.log_volume - 25.0  # sane, not junk

    def test_all_identical_points_degenerate(self):
        pts = np.ones((6, 2))
        with pytest.raises(AllDegenerate):
            max_volume_greedy(pts, 3)


class TestAffineRightInverse:
    def test_identity_profile(self):
        r = affine_right_inverse(np.eye(2))
        haug = np.hstack([np.eye(2), np.ones((2, 1))])
        np.testing.assert_allclose(haug @ r, np.eye(2), atol=1e-12)

    def test_duplicate_rows_warn(self):
        h = np.tile(np.array([[0.25, 0.25, 0.5]]), (2, 1))
        with pytest.warns(RankDeficientWarning):
            affine_right_inverse(h)

    def test_random_full_rank_right_inverse(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            h = rng.dirichlet(np.ones(8), size=3)
            r = affine_right_inverse(h)
            haug = np.hstack([h, np.ones((3, 1))])
            assert np.abs(haug @ r - np.eye(3)).max() <= 1e-8
