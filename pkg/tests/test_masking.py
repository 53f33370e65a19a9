import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlos_forge import (ScanGeometry, TransientVolume, combine_predictions,
                        fill_masked, gather_unmasked, make_random_mask,
                        make_regular_mask, scatter_histograms)


def volume_of(data):
    ny, nx, n_bins = data.shape
    return TransientVolume(ScanGeometry(2.0, 2.0, nx, ny, n_bins), data)


def random_volume(ny, nx, n_bins, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    return volume_of(rng.uniform(size=(ny, nx, n_bins)))


class TestRandomMask:
    def test_default_ratio_counts(self):
        # floor(0.95 * 4096) = 3891
        mask = make_random_mask(64, 64, 0.95, seed=0)
        assert mask.masked_count == 3891
        assert mask.unmasked_count == 205

    def test_ratio_zero_and_one(self):
        assert make_random_mask(8, 8, 0.0, seed=1).masked_count == 0
        assert make_random_mask(8, 8, 1.0, seed=1).masked_count == 64

    def test_floor_rule(self):
        # floor(0.5 * 9) = 4 for a 3x3 grid
        assert make_random_mask(3, 3, 0.5, seed=0).masked_count == 4

    def test_deterministic(self):
        a = make_random_mask(16, 16, 0.8, seed=9)
        b = make_random_mask(16, 16, 0.8, seed=9)
        c = make_random_mask(16, 16, 0.8, seed=10)
        assert np.array_equal(a.masked, b.masked)
        assert not np.array_equal(a.masked, c.masked)

    def test_ratio_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            make_random_mask(4, 4, 1.5, seed=0)
        with pytest.raises(ValueError):
            make_random_mask(4, 4, -0.1, seed=0)

    @given(st.integers(1, 12), st.integers(1, 12),
           st.floats(0.0, 1.0), st.integers(0, 2**32))
    @settings(max_examples=60)
    def test_partition_property(self, ny, nx, ratio, seed):
        mask = make_random_mask(ny, nx, ratio, seed)
        assert mask.masked_count == int(np.floor(ratio * ny * nx))
        assert mask.masked_count + mask.unmasked_count == ny * nx


class TestRegularMask:
    def test_stride_one_nothing_masked(self):
        assert make_regular_mask(8, 8, 1).masked_count == 0

    def test_stride_four_counting(self):
        mask = make_regular_mask(64, 64, 4)
        assert mask.unmasked_count == 256  # 16 x 16 kept

    def test_stride_equal_to_grid(self):
        assert make_regular_mask(64, 64, 64).unmasked_count == 1

    def test_kept_points_on_lattice(self):
        mask = make_regular_mask(6, 9, 3)
        kept = ~mask.masked
        iy, ix = np.nonzero(kept)
        assert np.all(iy % 3 == 0) and np.all(ix % 3 == 0)

    def test_bad_stride_rejected(self):
        with pytest.raises(ValueError):
            make_regular_mask(4, 4, 0)


class TestGatherScatter:
    def test_ratio_zero_identity_gather(self):
        vol = random_volume(4, 5, 6)
        indices, hists = gather_unmasked(vol, make_random_mask(4, 5, 0.0, seed=0))
        assert indices.tolist() == list(range(20))
        assert np.array_equal(hists, vol.data.reshape(20, 6))

    def test_single_survivor(self):
        vol = random_volume(3, 3, 4)
        masked = np.ones((3, 3), dtype=bool)
        masked[2, 1] = False  # flat index 7
        from nlos_forge import SpmMask
        indices, hists = gather_unmasked(vol, SpmMask(masked))
        assert indices.tolist() == [7]
        assert np.array_equal(hists[0], vol.data[2, 1])

    def test_row_major_order(self):
        vol = random_volume(4, 4, 2, seed=3)
        mask = make_random_mask(4, 4, 0.5, seed=4)
        indices, _ = gather_unmasked(vol, mask)
        assert np.all(np.diff(indices) > 0)

    def test_gather_scatter_round_trip(self):
        vol = random_volume(6, 7, 5, seed=8)
        mask = make_random_mask(6, 7, 0.6, seed=9)
        indices, hists = gather_unmasked(vol, mask)
        base = volume_of(vol.data.copy())  # masked slots already hold originals
        restored = scatter_histograms(indices, hists, base)
        assert np.array_equal(restored.data, vol.data)

    def test_dim_mismatch_rejected(self):
        vol = random_volume(4, 4, 2)
        with pytest.raises(ValueError):
            gather_unmasked(vol, make_random_mask(4, 5, 0.5, seed=0))


class TestCombinePredictions:
    def test_ratio_zero_keeps_original(self):
        orig, pred = random_volume(4, 4, 3, 1), random_volume(4, 4, 3, 2)
        out = combine_predictions(orig, pred, make_random_mask(4, 4, 0.0, seed=0))
        assert out.data.tobytes() == orig.data.tobytes()

    def test_ratio_one_takes_predicted(self):
        orig, pred = random_volume(4, 4, 3, 1), random_volume(4, 4, 3, 2)
        out = combine_predictions(orig, pred, make_random_mask(4, 4, 1.0, seed=0))
        assert out.data.tobytes() == pred.data.tobytes()

    def test_pointwise_selection(self):
        orig, pred = random_volume(8, 8, 4, 1), random_volume(8, 8, 4, 2)
        mask = make_random_mask(8, 8, 0.5, seed=5)
        out = combine_predictions(orig, pred, mask)
        iy, ix = np.nonzero(mask.masked)
        assert np.array_equal(out.data[iy, ix], pred.data[iy, ix])
        jy, jx = np.nonzero(~mask.masked)
        assert out.data[jy, jx].tobytes() == orig.data[jy, jx].tobytes()

    def test_self_combine_is_identity(self):
        vol = random_volume(5, 5, 3, seed=6)
        for ratio in (0.0, 0.4, 1.0):
            mask = make_random_mask(5, 5, ratio, seed=7)
            out = combine_predictions(vol, vol, mask)
            assert out.data.tobytes() == vol.data.tobytes()


class TestFillMasked:
    def test_zero_fill(self):
        vol = random_volume(4, 4, 3, seed=1)
        mask = make_random_mask(4, 4, 0.5, seed=2)
        out = fill_masked(vol, mask, "zero")
        assert not out.data[mask.masked].any()
        assert np.array_equal(out.data[~mask.masked], vol.data[~mask.masked])

    def test_nearest_fill_copies_neighbor(self):
        vol = random_volume(1, 4, 2, seed=3)
        masked = np.array([[False, True, True, False]])
        from nlos_forge import SpmMask
        out = fill_masked(vol, SpmMask(masked), "nearest")
        assert np.array_equal(out.data[0, 1], vol.data[0, 0])
        assert np.array_equal(out.data[0, 2], vol.data[0, 3])

    def test_nearest_fill_preserves_unmasked(self):
        vol = random_volume(6, 6, 4, seed=4)
        mask = make_random_mask(6, 6, 0.9, seed=5)
        out = fill_masked(vol, mask, "nearest")
        assert np.array_equal(out.data[~mask.masked], vol.data[~mask.masked])

    def test_nearest_fill_needs_survivor(self):
        vol = random_volume(3, 3, 2)
        with pytest.raises(ValueError):
            fill_masked(vol, make_random_mask(3, 3, 1.0, seed=0), "nearest")
