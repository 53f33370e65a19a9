import math

import numpy as np
import pytest

from nlos_forge import (SPEED_OF_LIGHT, HiddenScene, RenderOptions,
                        ScanGeometry, TransientVolume, downsample_spatial,
                        render_confocal)


def point_scene(x, y, z, albedo=1.0):
    return HiddenScene(np.array([[x, y, z]]), np.array([albedo]))


@pytest.fixture
def single_pixel():
    # 1x1 grid centered on the origin
    return ScanGeometry(2.0, 2.0, 1, 1, 512, bin_width=32e-12)


class TestSinglePointOracle:
    def test_unit_distance_deposit(self, single_pixel):
        # r = 1 exactly, so amplitude 1/r^4 = 1 lands in bin floor(2r/(c dt))
        vol = render_confocal(point_scene(0.0, 0.0, 1.0), single_pixel)
        expected_bin = math.floor(2.0 / (SPEED_OF_LIGHT * 32e-12))
        hist = vol.data[0, 0]
        assert hist[expected_bin] == 1.0
        assert np.count_nonzero(hist) == 1

    def test_falloff_amplitude_exact(self, single_pixel):
        # r = 2: amplitude rho / r^4 exactly
        vol = render_confocal(point_scene(0.0, 0.0, 2.0, albedo=3.0), single_pixel)
        expected_bin = math.floor(4.0 / (SPEED_OF_LIGHT * 32e-12))
        assert vol.data[0, 0, expected_bin] == 3.0 / 16.0

    def test_out_of_range_dropped(self, single_pixel):
        vol = render_confocal(point_scene(0.0, 0.0, 10.0), single_pixel)
        assert not vol.data.any()


class TestEnergyBookkeeping:
    def test_exponent_zero_unit_mass_per_scan_point(self):
        g = ScanGeometry(2.0, 2.0, 8, 8, 4096, bin_width=32e-12)
        scene = point_scene(0.1, -0.2, 1.3)
        vol = render_confocal(scene, g, RenderOptions(falloff_exponent=0))
        assert np.allclose(vol.data.sum(axis=-1), 1.0, rtol=0, atol=0)

    def test_superposed_points_double(self):
        g = ScanGeometry(2.0, 2.0, 4, 4, 512, bin_width=32e-12)
        one = render_confocal(point_scene(0.2, 0.1, 0.9), g)
        two = render_confocal(
            HiddenScene(np.array([[0.2, 0.1, 0.9]] * 2), np.ones(2)), g)
        assert np.array_equal(two.data, 2.0 * one.data)

    def test_linearity_of_union(self):
        g = ScanGeometry(2.0, 2.0, 6, 6, 512, bin_width=32e-12)
        rng = np.random.Generator(np.random.Philox(17))
        pts_a = rng.uniform([-0.5, -0.5, 0.5], [0.5, 0.5, 1.5], size=(40, 3))
        pts_b = rng.uniform([-0.5, -0.5, 0.5], [0.5, 0.5, 1.5], size=(25, 3))
        alb_a, alb_b = rng.uniform(0.1, 2.0, 40), rng.uniform(0.1, 2.0, 25)
        a = render_confocal(HiddenScene(pts_a, alb_a), g)
        b = render_confocal(HiddenScene(pts_b, alb_b), g)
        union = render_confocal(
            HiddenScene(np.vstack([pts_a, pts_b]), np.concatenate([alb_a, alb_b])), g)
        assert np.allclose(union.data, a.data + b.data, rtol=1e-12, atol=0)

    def test_farther_point_never_earlier_bin(self):
        g = ScanGeometry(2.0, 2.0, 4, 4, 2048, bin_width=32e-12)
        bins = []
        for z in (0.5, 0.8, 1.1, 1.7, 2.3):
            vol = render_confocal(point_scene(0.0, 0.0, z), g)
            bins.append(np.nonzero(vol.data[0, 0])[0][0])
        assert bins == sorted(bins)


class TestBinWeighting:
    def test_nearest_and_linear_agree_on_mass(self):
        g = ScanGeometry(2.0, 2.0, 5, 5, 1024, bin_width=32e-12)
        scene = point_scene(0.13, -0.27, 1.11, albedo=0.7)
        nearest = render_confocal(scene, g, RenderOptions(bin_weighting="nearest"))
        linear = render_confocal(scene, g, RenderOptions(bin_weighting="linear"))
        assert np.allclose(nearest.data.sum(axis=-1), linear.data.sum(axis=-1),
                           rtol=1e-12, atol=0)

    def test_linear_splits_two_adjacent_bins(self, single_pixel):
        vol = render_confocal(point_scene(0.0, 0.0, 1.0), single_pixel,
                              RenderOptions(bin_weighting="linear"))
        nz = np.nonzero(vol.data[0, 0])[0]
        assert len(nz) <= 2 and np.all(np.diff(nz) == 1)
        assert vol.data[0, 0].sum() == pytest.approx(1.0, rel=1e-12)


class TestValidationAndThreads:
    def test_empty_scene_rejected(self, single_pixel):
        with pytest.raises(ValueError):
            HiddenScene(np.zeros((0, 3)), np.zeros(0))

    def test_threads_do_not_change_result(self):
        g = ScanGeometry(2.0, 2.0, 8, 8, 256, bin_width=64e-12)
        rng = np.random.Generator(np.random.Philox(3))
        pts = rng.uniform([-0.6, -0.6, 0.4], [0.6, 0.6, 1.2], size=(50, 3))
        scene = HiddenScene(pts, np.ones(50))
        a = render_confocal(scene, g, threads=1)
        b = render_confocal(scene, g, threads=4)
        assert np.array_equal(a.data, b.data)

    def test_cosine_reduces_off_axis(self):
        g = ScanGeometry(2.0, 2.0, 2, 1, 512, bin_width=32e-12)
        plain = render_confocal(point_scene(0.0, 0.0, 0.8), g)
        cos = render_confocal(point_scene(0.0, 0.0, 0.8), g,
                              RenderOptions(include_cosine=True))
        assert np.all(cos.data.sum(axis=-1) < plain.data.sum(axis=-1))


class TestDownsample:
    def test_uniform_blocks(self):
        g = ScanGeometry(2.0, 2.0, 4, 4, 8)
        h = np.arange(8.0)
        vol = TransientVolume(g, np.tile(h, (4, 4, 1)))
        out = downsample_spatial(vol, 2)
        assert out.data.shape == (2, 2, 8)
        assert np.array_equal(out.data, np.tile(4.0 * h, (2, 2, 1)))

    def test_factor_one_identity(self):
        g = ScanGeometry(2.0, 2.0, 4, 4, 8)
        vol = TransientVolume(g, np.random.default_rng(0).uniform(size=(4, 4, 8)))
        assert np.array_equal(downsample_spatial(vol, 1).data, vol.data)

    def test_total_count_conserved(self):
        g = ScanGeometry(2.0, 2.0, 8, 8, 16)
        data = np.random.default_rng(1).uniform(size=(8, 8, 16))
        out = downsample_spatial(TransientVolume(g, data), 4)
        assert out.data.sum() == pytest.approx(data.sum(), rel=1e-12)

    def test_non_divisible_rejected(self):
        g = ScanGeometry(2.0, 2.0, 6, 6, 4)
        with pytest.raises(ValueError):
            downsample_spatial(TransientVolume(g, np.zeros((6, 6, 4))), 4)
