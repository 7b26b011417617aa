import numpy as np
import pytest

from viewconsist import (
    DomainShiftConfig,
    InvalidInputError,
    ShapeTemplate,
    generate_source,
    generate_target,
    pose_invariant_distance,
)
from viewconsist.synthbench import (
    bbox_diagonal,
    chair_skeleton,
    load_labeled,
    load_viewsets,
    read_manifest,
    write_labeled,
    write_manifest,
    write_viewsets,
)


@pytest.fixture(scope="module")
def template():
    return ShapeTemplate()


class TestSkeletonGeometry:
    def test_unit_chair_corner_positions(self):
        # unit box chair: raw centroid is (0, -0.1, 0.8) since 8 of 10
        # keypoints sit at y = +-0.5 and two back-tops add y = -0.5, while
        # z-levels are {0 x4, 1 x4, 2 x2}
        skel = chair_skeleton(1.0, 1.0, 1.0, 1.0)
        assert np.abs(skel.sum(axis=1)).max() < 1e-12
        expected_first_leg = np.array([-0.5, -0.4, -0.8])
        assert np.allclose(skel[:, 0], expected_first_leg, atol=1e-12)
        expected_back_top = np.array([0.5, -0.4, 1.2])
        assert np.allclose(skel[:, 9], expected_back_top, atol=1e-12)
        assert bbox_diagonal(skel) == pytest.approx(np.sqrt(1 + 1 + 4), abs=1e-12)

    def test_surface_points_lie_on_edges(self, template):
        skel = chair_skeleton(0.5, 0.6, 0.5, 0.4)
        surf = template.surface(skel)
        assert surf.shape == (3, template.n_surface_points)
        # every surface point is a convex combination of exactly two keypoints,
        # so it lies within the skeleton's bounding box
        assert np.all(surf.min(axis=1) >= skel.min(axis=1) - 1e-12)
        assert np.all(surf.max(axis=1) <= skel.max(axis=1) + 1e-12)


class TestGenerateSource:
    def test_deterministic_per_seed(self, template):
        a = generate_source(template, 6, 2, seed=11)
        b = generate_source(template, 6, 2, seed=11)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)
        c = generate_source(template, 6, 2, seed=12)
        assert not np.array_equal(a.inputs, c.inputs)

    def test_views_of_one_model_share_an_orbit(self, template):
        ds = generate_source(template, 3, 4, seed=5)
        for obj in range(3):
            idx = np.flatnonzero(ds.object_ids == obj)
            for j in idx[1:]:
                assert pose_invariant_distance(ds.labels[idx[0]], ds.labels[j]) < 1e-10

    def test_labels_centered_and_diag_matches_canonical_frame(self, template):
        ds = generate_source(template, 5, 2, seed=9)
        assert np.abs(ds.labels.sum(axis=2)).max() < 1e-9
        for i in range(len(ds)):
            canonical = ds.cameras[i].T @ ds.labels[i]
            assert ds.diagonals[i] > 0
            assert bbox_diagonal(canonical) == pytest.approx(ds.diagonals[i], abs=1e-12)


class TestGenerateTarget:
    def test_null_shift_equals_clean_generation(self, template):
        shift = DomainShiftConfig(
            noise_std=0.0, dropout_rate=0.0, clutter_count=0, scale_jitter=0.0,
            subtype_weights=template.source_mixture,
        )
        clean = generate_source(template, 4, 3, seed=21)
        shifted = generate_target(template, 4, 3, shift, seed=21)
        got_inputs = np.concatenate([vs.inputs for vs in shifted])
        got_gt = np.concatenate([vs.gt_keypoints for vs in shifted])
        assert np.array_equal(got_inputs, clean.inputs)
        assert np.array_equal(got_gt, clean.labels)

    def test_full_dropout_gives_all_sentinel_inputs(self, template):
        shift = DomainShiftConfig(dropout_rate=1.0)
        viewsets = generate_target(template, 3, 2, shift, seed=4)
        for vs in viewsets:
            assert np.all(vs.inputs == 0.0)

    def test_corruption_never_touches_ground_truth(self, template):
        shift = DomainShiftConfig(
            noise_std=0.1, dropout_rate=0.5, clutter_count=10, scale_jitter=0.3,
            subtype_weights=template.source_mixture,
        )
        corrupted = generate_target(template, 4, 3, shift, seed=33)
        clean = generate_target(template, 4, 3, DomainShiftConfig(
            noise_std=0.0, dropout_rate=0.0, clutter_count=0, scale_jitter=0.0,
            subtype_weights=template.source_mixture,
        ), seed=33)
        for a, b in zip(corrupted, clean):
            assert np.array_equal(a.gt_keypoints, b.gt_keypoints)
            assert not np.array_equal(a.inputs, b.inputs)

    def test_viewset_gt_orbit_property(self, template):
        viewsets = generate_target(template, 3, 5, DomainShiftConfig(), seed=8)
        for vs in viewsets:
            for j in range(1, len(vs)):
                assert pose_invariant_distance(vs.gt_keypoints[0], vs.gt_keypoints[j]) < 1e-10

    def test_subtype_mixture_is_respected(self, template):
        shift = DomainShiftConfig(subtype_weights=(0.0, 0.0, 1.0))
        viewsets = generate_target(template, 10, 1, shift, seed=2)
        assert all(vs.subtype == 2 for vs in viewsets)

    def test_invalid_shift_rejected(self):
        with pytest.raises(InvalidInputError):
            DomainShiftConfig(dropout_rate=1.5)
        with pytest.raises(InvalidInputError):
            DomainShiftConfig(scale_jitter=-0.1)


class TestDatasetFiles:
    def test_labeled_roundtrip_and_byte_stability(self, template, tmp_path):
        ds = generate_source(template, 4, 2, seed=17)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_labeled(p1, ds)
        write_labeled(p2, ds)
        assert p1.read_bytes() == p2.read_bytes()
        loaded = load_labeled(p1)
        assert np.array_equal(loaded.inputs, ds.inputs)
        assert np.array_equal(loaded.labels, ds.labels)
        assert np.array_equal(loaded.object_ids, ds.object_ids)
        assert np.array_equal(loaded.diagonals, ds.diagonals)

    def test_viewsets_roundtrip(self, template, tmp_path):
        viewsets = generate_target(template, 3, 4, DomainShiftConfig(), seed=6)
        path = tmp_path / "target.jsonl"
        write_viewsets(path, viewsets)
        loaded = load_viewsets(path)
        assert len(loaded) == len(viewsets)
        for a, b in zip(loaded, viewsets):
            assert a.object_id == b.object_id
            assert np.array_equal(a.inputs, b.inputs)
            assert np.array_equal(a.gt_keypoints, b.gt_keypoints)
            assert a.diagonal == b.diagonal

    def test_manifest_roundtrip(self, template, tmp_path):
        path = tmp_path / "manifest.json"
        write_manifest(path, template, {"target_models": 3}, DomainShiftConfig(), seed=5)
        manifest = read_manifest(path)
        assert manifest["seed"] == 5
        assert manifest["template"]["n_surface_points"] == 96
        assert manifest["shift"]["dropout_rate"] == 0.05
