"""Scanning pattern masks (SPM) over the scanning grid.

A mask hides a subset of scanning points from the encoder; the unmasked
subset is functionally an arbitrary physical scanning pattern, regular or
irregular, sparse or dense.  Gather/scatter between the full (ny, nx) grid
and the unmasked token sequence is always in row-major scan order, which is
the positional-embedding contract of the autoencoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .core import TransientVolume


@dataclass
class SpmMask:
    """Boolean mask over scanning points; True = hidden from the encoder."""

    masked: np.ndarray           # (ny, nx) bool
    pattern: str = "custom"      # random | regular-grid | custom
    seed: int | None = None      # random pattern only

    def __post_init__(self):
        self.masked = np.asarray(self.masked, dtype=bool)
        if self.masked.ndim != 2:
            raise ValueError("mask must be 2D over the scanning grid")

    @property
    def ny(self) -> int:
        return self.masked.shape[0]

    @property
    def nx(self) -> int:
        return self.masked.shape[1]

    @property
    def masked_count(self) -> int:
        return int(self.masked.sum())

    @property
    def unmasked_count(self) -> int:
        return self.masked.size - self.masked_count

    @property
    def ratio(self) -> float:
        """Realized masked fraction."""
        return self.masked_count / self.masked.size


def make_random_mask(ny: int, nx: int, ratio: float, seed: int) -> SpmMask:
    """Mask exactly floor(ratio * ny * nx) points, uniformly without replacement."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("masking ratio must be in [0, 1]")
    n = ny * nx
    count = int(np.floor(ratio * n))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    chosen = rng.permutation(n)[:count]
    masked = np.zeros(n, dtype=bool)
    masked[chosen] = True
    return SpmMask(masked.reshape(ny, nx), pattern="random", seed=seed)


def make_regular_mask(ny: int, nx: int, stride: int) -> SpmMask:
    """Keep every stride-th point in both directions; mask the rest."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    iy, ix = np.mgrid[0:ny, 0:nx]
    masked = ~((iy % stride == 0) & (ix % stride == 0))
    return SpmMask(masked, pattern="regular-grid")


def _check_dims(volume: TransientVolume, mask: SpmMask):
    if (mask.ny, mask.nx) != (volume.geometry.ny, volume.geometry.nx):
        raise ValueError(
            f"mask grid {mask.ny}x{mask.nx} does not match "
            f"volume grid {volume.geometry.ny}x{volume.geometry.nx}"
        )


def gather_unmasked(volume: TransientVolume, mask: SpmMask):
    """Unmasked histograms in row-major scan order.

    Returns (indices, histograms): flat scan indices (U,) and the matching
    histograms (U, n_bins).
    """
    _check_dims(volume, mask)
    keep = ~mask.masked.reshape(-1)
    indices = np.flatnonzero(keep)
    histograms = volume.data.reshape(-1, volume.geometry.n_bins)[indices]
    return indices, histograms


def scatter_histograms(
    indices: np.ndarray,
    histograms: np.ndarray,
    base: TransientVolume,
) -> TransientVolume:
    """Write histograms back at the given flat scan indices of a copy of base."""
    out = base.data.reshape(-1, base.geometry.n_bins).copy()
    out[indices] = histograms
    return TransientVolume(base.geometry, out.reshape(base.data.shape))


def combine_predictions(
    original: TransientVolume,
    predicted: TransientVolume,
    mask: SpmMask,
) -> TransientVolume:
    """Predicted values at masked points, measured values everywhere else.

    Measured data is never overwritten: unmasked entries of the output are
    bitwise equal to the original.
    """
    _check_dims(original, mask)
    _check_dims(predicted, mask)
    out = np.where(mask.masked[:, :, None], predicted.data, original.data)
    return TransientVolume(original.geometry, out)


def fill_masked(volume: TransientVolume, mask: SpmMask, mode: str = "zero") -> TransientVolume:
    """Replace masked histograms: zeros, or the nearest unmasked neighbor.

    The nearest-neighbor fill is the interpolation baseline used before
    running full-grid reconstruction methods on masked measurements.
    """
    _check_dims(volume, mask)
    if mode == "zero":
        out = volume.data.copy()
        out[mask.masked] = 0.0
        return TransientVolume(volume.geometry, out)
    if mode == "nearest":
        if mask.unmasked_count == 0:
            raise ValueError("nearest fill needs at least one unmasked point")
        _, (src_y, src_x) = distance_transform_edt(mask.masked, return_indices=True)
        return TransientVolume(volume.geometry, volume.data[src_y, src_x])
    raise ValueError(f"unknown fill mode {mode!r}; use 'zero' or 'nearest'")
