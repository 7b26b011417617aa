import numpy as np
import pytest

from viewconsist import (
    InvalidInputError,
    KeypointConfig,
    Rotation,
    center,
    optimal_rotation,
    pose_align,
    pose_invariant_distance,
    pose_invariant_gradient,
)

from oracles import (
    central_difference,
    grid_min_residual,
    grid_resolution_bound,
    random_config,
    random_rotation,
    relative_errors,
    sample_rotations,
)

UNIT_SQUARE = np.array(
    [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [0.0, 0.0, 0.0, 0.0]]
)


class TestCenter:
    def test_already_centered_is_unchanged(self):
        raw = np.array([[1.0, -1.0, 0.0], [0.0, 2.0, -2.0], [3.0, -1.0, -2.0]])
        assert np.array_equal(center(raw).coords, raw)

    def test_subtracts_column_mean(self):
        raw = np.array([[1.0, 3.0], [0.0, 0.0], [0.0, 0.0]])
        expected = np.array([[-1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        assert np.array_equal(center(raw).coords, expected)

    def test_idempotent(self, rng):
        for _ in range(20):
            raw = rng.normal(size=(3, 7)) + rng.normal(size=(3, 1))
            once = center(raw).coords
            twice = center(once).coords
            assert np.abs(twice - once).max() < 1e-15

    def test_rejects_non_finite(self):
        raw = np.zeros((3, 4))
        raw[1, 2] = np.nan
        with pytest.raises(InvalidInputError):
            center(raw)

    def test_rejects_single_point(self):
        with pytest.raises(InvalidInputError):
            center(np.zeros((3, 1)))


class TestKeypointConfig:
    def test_rejects_uncentered(self):
        with pytest.raises(InvalidInputError):
            KeypointConfig(np.ones((3, 4)))

    def test_owns_its_storage(self):
        raw = UNIT_SQUARE.copy()
        cfg = KeypointConfig(raw)
        raw[0, 0] = 99.0
        assert cfg.coords[0, 0] == 1.0
        assert not cfg.coords.flags.writeable
        assert cfg.d == 4


class TestRotationType:
    def test_rejects_reflection(self):
        with pytest.raises(InvalidInputError):
            Rotation(np.diag([1.0, 1.0, -1.0]))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidInputError):
            Rotation(np.eye(3) * 1.001)


class TestOptimalRotation:
    def test_self_alignment_is_identity(self, rng):
        x = random_config(rng, 6)
        rot = optimal_rotation(x, x)
        assert np.abs(rot.mat - np.eye(3)).max() < 1e-12
        assert not rot.degenerate

    def test_recovers_applied_rotation(self, rng):
        for d in (3, 5, 10):
            x = random_config(rng, d)
            r0 = random_rotation(rng)
            rot = optimal_rotation(x, r0 @ x)
            assert np.abs(rot.mat - r0).max() < 1e-8

    def test_beats_rotation_grid(self, rng):
        rotations = sample_rotations(100_000, rng)
        for d in (3, 5, 10):
            x, y = random_config(rng, d), random_config(rng, d)
            rot = optimal_rotation(x, y)
            ours = float(np.linalg.norm(rot.mat @ x - y) ** 2)
            grid = grid_min_residual(x, y, rotations)
            assert ours <= grid + 1e-9
            assert grid - ours <= grid_resolution_bound(x, y, len(rotations))

    def test_degenerate_flag_on_rank_one(self, rng):
        line = center(np.outer([1.0, 2.0, -0.5], [0.0, 1.0, 2.0, 3.0])).coords
        rot = optimal_rotation(line, random_rotation(rng) @ line)
        assert rot.degenerate
        assert abs(np.linalg.det(rot.mat) - 1.0) < 1e-9

    def test_two_point_configs_are_always_degenerate(self, rng):
        two = center(np.array([[0.0, 2.0], [1.0, -1.0], [0.5, 0.5]])).coords
        rot = optimal_rotation(two, random_rotation(rng) @ two)
        assert rot.degenerate
        assert pose_invariant_distance(two, random_rotation(rng) @ two) < 1e-12

    def test_rejects_nan(self):
        bad = np.zeros((3, 4))
        bad[0, 0] = np.nan
        with pytest.raises(InvalidInputError):
            optimal_rotation(bad, np.zeros((3, 4)))

    def test_rejects_mismatched_d(self, rng):
        with pytest.raises(InvalidInputError):
            optimal_rotation(random_config(rng, 4), random_config(rng, 5))


class TestPoseInvariantDistance:
    def test_zero_on_self(self, rng):
        x = random_config(rng, 8)
        assert pose_invariant_distance(x, x) < 1e-12

    def test_zero_on_orbit(self, rng):
        for d in (2, 3, 5, 10):
            x = random_config(rng, d)
            r0 = random_rotation(rng)
            assert pose_invariant_distance(x, r0 @ x) < 1e-12

    def test_scaled_unit_square(self, rng):
        # no rotation improves on aligning a shape with its own dilation
        assert pose_invariant_distance(UNIT_SQUARE, 2.0 * UNIT_SQUARE) == pytest.approx(8.0, abs=1e-12)
        rotations = sample_rotations(100_000, rng)
        grid = grid_min_residual(UNIT_SQUARE, 2.0 * UNIT_SQUARE, rotations)
        assert 8.0 <= grid + 1e-9

    def test_nonnegative_clamp(self, rng):
        for _ in range(200):
            x = random_config(rng, 4)
            assert pose_invariant_distance(x, x.copy()) >= 0.0


class TestPoseInvariantGradient:
    def test_zero_at_coincidence(self, rng):
        x = random_config(rng, 5)
        assert np.abs(pose_invariant_gradient(x, x)).max() < 1e-12

    def test_zero_on_orbit(self, rng):
        x = random_config(rng, 5)
        y = random_rotation(rng) @ x
        assert np.abs(pose_invariant_gradient(x, y)).max() < 1e-8

    def test_matches_finite_differences(self, rng):
        for d in (3, 5, 10):
            x, y = random_config(rng, d), random_config(rng, d)
            analytic = pose_invariant_gradient(x, y)
            numeric = central_difference(lambda z: pose_invariant_distance(z, y), x)
            assert relative_errors(analytic, numeric).max() < 1e-4

    def test_degenerate_flag_propagates(self, rng):
        planar = center(UNIT_SQUARE + 0.0).coords
        alignment = pose_align(planar, random_rotation(rng) @ planar)
        assert alignment.degenerate
        assert alignment.gradient.shape == planar.shape


class TestMetricProperties:
    def test_symmetry(self, rng):
        for _ in range(50):
            d = int(rng.integers(3, 12))
            x, y = random_config(rng, d), random_config(rng, d)
            assert abs(pose_invariant_distance(x, y) - pose_invariant_distance(y, x)) < 1e-9

    def test_bi_invariance(self, rng):
        for _ in range(50):
            x, y = random_config(rng, 6), random_config(rng, 6)
            r1, r2 = random_rotation(rng), random_rotation(rng)
            base = pose_invariant_distance(x, y)
            assert abs(pose_invariant_distance(r1 @ x, r2 @ y) - base) < 1e-9

    def test_sqrt_triangle_inequality(self, rng):
        for _ in range(100):
            d = int(rng.integers(3, 8))
            x, y, z = (random_config(rng, d) for _ in range(3))
            dxz = np.sqrt(pose_invariant_distance(x, z))
            dxy = np.sqrt(pose_invariant_distance(x, y))
            dyz = np.sqrt(pose_invariant_distance(y, z))
            assert dxz <= dxy + dyz + 1e-9

    def test_identity_of_indiscernibles(self, rng):
        for _ in range(50):
            x = random_config(rng, 6)
            y = random_rotation(rng) @ x
            alignment = pose_align(x, y)
            if alignment.distance < 1e-12:
                assert np.linalg.norm(alignment.rotation.mat @ x - y) < 1e-6

    def test_closed_form_is_a_lower_bound_over_sampled_rotations(self, rng):
        rotations = sample_rotations(100_000, rng)
        for d in (3, 5, 10):
            x, y = random_config(rng, d), random_config(rng, d)
            r = pose_invariant_distance(x, y)
            assert r <= grid_min_residual(x, y, rotations) + 1e-9
