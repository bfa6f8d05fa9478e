import numpy as np
import pytest

from coarsegrasp import affordance as A
from coarsegrasp.scene import (
    ObjectSpec,
    Scene,
    SceneConfig,
    contains,
    footprint_mask,
    scene_from_seed,
)


def disc_scene(radius=8.0, center=(16, 16), workspace=(32, 32)):
    obj = ObjectSpec(0, "disc", (float(center[0]), float(center[1]), 0.0),
                     {"radius": radius}, 1.0, (1.0, 0.0, 0.0))
    return Scene((obj,), workspace, 0)


def rect_scene(half_long=10.0, half_short=4.0, workspace=(40, 40)):
    obj = ObjectSpec(0, "rectangle", (20.0, 20.0, 0.0),
                     {"half_long": half_long, "half_short": half_short},
                     1.0, (0.0, 1.0, 0.0))
    return Scene((obj,), workspace, 0)


class TestSigmaFor:
    def test_disc_center(self):
        sc = disc_scene(radius=8.0)
        assert A.sigma_for(sc, 0, (16.0, 16.0)) == pytest.approx(8.0, abs=1.0)

    def test_rect_center_min_half_extent(self):
        sc = rect_scene(10.0, 4.0)
        assert A.sigma_for(sc, 0, (20.0, 20.0)) == pytest.approx(4.0, abs=1.0)

    def test_off_footprint_rejected(self):
        with pytest.raises(ValueError):
            A.sigma_for(disc_scene(radius=4.0), 0, (2.0, 2.0))

    def test_brute_force_boundary_scan(self):
        # oracle: exhaustive distance to off-footprint pixel centers
        rng = np.random.default_rng(2)
        for seed in range(6):
            sc = scene_from_seed(3, (40, 40), 50 + seed)
            for obj in sc.objects:
                mask = footprint_mask(obj, sc.workspace)
                rows, cols = np.nonzero(mask)
                bg = np.argwhere(~mask)
                for _ in range(3):
                    i = int(rng.integers(rows.size))
                    p = (float(rows[i]), float(cols[i]))
                    oracle = np.sqrt(((bg - np.array(p)) ** 2).sum(axis=1)).min()
                    assert A.sigma_for(sc, obj.id, p) == pytest.approx(oracle, abs=1.0)


class TestAnnotate:
    def test_zero_noise_hits_centroid(self):
        sc = disc_scene(radius=6.0)
        label = A.annotate_keypoints(sc, 0.0, np.random.default_rng(0))
        assert label.points[0] == pytest.approx((16.0, 16.0), abs=0.6)

    def test_noise_bound(self):
        sc = disc_scene(radius=10.0, center=(20, 20), workspace=(40, 40))
        for seed in range(20):
            label = A.annotate_keypoints(sc, 0.25, np.random.default_rng(seed))
            v, u = label.points[0]
            assert np.hypot(v - 20.0, u - 20.0) <= 2.6  # 0.25 * ~10 px + raster slack

    def test_noisy_points_stay_on_footprint(self):
        # footprint-membership oracle across many random scenes
        for seed in range(40):
            sc = scene_from_seed(3, (40, 40), 200 + seed)
            label = A.annotate_keypoints(sc, 0.25, np.random.default_rng(seed))
            for obj, (v, u) in zip(sc.objects, label.points):
                assert bool(contains(obj, v, u))

    def test_counts_match_objects(self):
        sc = scene_from_seed(4, (40, 40), 77)
        label = A.annotate_keypoints(sc, 0.25, np.random.default_rng(1))
        assert len(label.points) == len(label.sigmas) == len(sc.objects)

    def test_bad_noise_frac(self):
        with pytest.raises(ValueError):
            A.annotate_keypoints(disc_scene(), 0.6, np.random.default_rng(0))


class TestGaussianHeatmap:
    def test_peak_value(self):
        m = A.gaussian_heatmap((16.0, 16.0), 4.0, (32, 32))
        assert m[16, 16] == pytest.approx(1.0 / (32 * np.pi), rel=1e-12)
        assert m.argmax() == 16 * 32 + 16

    def test_one_sigma_falloff(self):
        m = A.gaussian_heatmap((16.0, 16.0), 4.0, (32, 32))
        assert m[20, 16] == pytest.approx(m[16, 16] * np.exp(-0.5), rel=1e-12)

    def test_grid_mass_near_one(self):
        # numeric summation oracle on a >= 5 sigma grid
        m = A.gaussian_heatmap((32.0, 32.0), 4.0, (65, 65))
        assert 0.999 <= m.sum() <= 1.0

    def test_monotone_decay(self):
        m = A.gaussian_heatmap((16.0, 16.0), 3.0, (33, 33))
        along_row = m[16, 16:]
        assert (np.diff(along_row) <= 0).all()

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            A.gaussian_heatmap((1.0, 1.0), 0.0, (8, 8))


class TestComposeGroundTruth:
    def test_single_map_normalizes(self):
        m = A.gaussian_heatmap((16.0, 16.0), 3.0, (32, 32))
        gt = A.compose_ground_truth([m])
        assert gt.sum() == pytest.approx(1.0, abs=1e-12)

    def test_two_disjoint_lobes_split_mass(self):
        a = A.gaussian_heatmap((16.0, 16.0), 2.0, (64, 64))
        b = A.gaussian_heatmap((48.0, 48.0), 2.0, (64, 64))
        gt = A.compose_ground_truth([a, b])
        left = gt[:32, :32].sum()
        assert left == pytest.approx(0.5, abs=1e-3)

    def test_empty_list(self):
        gt = A.compose_ground_truth([], dims=(16, 16))
        assert gt.shape == (16, 16) and not gt.any()

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            A.compose_ground_truth([np.zeros((8, 8)), np.zeros((9, 9))])


class TestRobustness:
    def test_keypoint_perturbation_keeps_mass_on_footprint(self):
        # perturbing by <= 25% of sigma moves <= 5% of mass off convex footprints
        sc = disc_scene(radius=8.0, center=(20, 20), workspace=(40, 40))
        mask = footprint_mask(sc.objects[0], sc.workspace)
        base = A.gaussian_heatmap((20.0, 20.0), 8.0, (40, 40))
        on_mass0 = base[mask].sum() / base.sum()
        shifted = A.gaussian_heatmap((22.0, 20.0), 8.0, (40, 40))  # 2 px = 25% sigma
        on_mass1 = shifted[mask].sum() / shifted.sum()
        assert on_mass0 - on_mass1 <= 0.05


class TestDataset:
    def test_single_sample_shapes(self):
        samples = A.build_pretrain_dataset(1, 3, (32, 32), 0.25, 5)
        s = samples[0]
        assert s.heightmaps.color.shape == (32, 32, 3)
        assert s.label.shape == (32, 32)

    def test_deterministic(self):
        a = A.build_pretrain_dataset(10, 3, (32, 32), 0.25, 5)
        b = A.build_pretrain_dataset(10, 3, (32, 32), 0.25, 5)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.label, sb.label)
            assert np.array_equal(sa.heightmaps.depth, sb.heightmaps.depth)

    def test_all_labels_normalized(self):
        samples = A.build_pretrain_dataset(50, 4, (32, 32), 0.25, 5)
        for s in samples:
            assert s.label.sum() == pytest.approx(1.0, abs=1e-6)

    def test_save_load_round_trip(self, tmp_path):
        samples = A.build_pretrain_dataset(3, 3, (32, 32), 0.25, 5)
        A.save_dataset(samples, str(tmp_path))
        back = A.load_dataset(str(tmp_path))
        assert len(back) == 3
        for sa, sb in zip(samples, back):
            assert np.allclose(sa.label, sb.label, atol=1e-9)
            assert np.abs(sa.heightmaps.depth - sb.heightmaps.depth).max() < 1e-3
