"""Shared domain types for confocal NLOS transient data.

A transient is a histogram of photon counts over time bins, recorded at one
scanning point on the relay wall.  A full measurement is a 3D volume of such
histograms indexed (scan-row, scan-column, time-bin).  This module holds the
scan geometry, the transient and reconstruction volume containers, the
index-to-physics conversions, and per-transient normalization.

Flat index layout contract, obeyed by every module and file format:
element (iy, ix, it) lives at flat offset ((iy * nx + ix) * n_bins + it),
i.e. C-order over an (ny, nx, n_bins) array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

#: Sentinel returned by round_trip_bin when the arrival time falls past the
#: last time bin.  Out-of-range is a value, not an error.
OUT_OF_RANGE = -1


@dataclass(frozen=True)
class ScanGeometry:
    """Relay-wall extent, scanning grid resolution and temporal sampling.

    Scanning points lie on the z = 0 plane, at pixel centers of an
    ny x nx grid spanning wall_height x wall_width, centered on the origin.
    The hidden scene lives at z > 0.
    """

    wall_width: float
    wall_height: float
    nx: int
    ny: int
    n_bins: int
    bin_width: float = 32e-12
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.n_bins < 1:
            raise ValueError("grid dims and n_bins must all be >= 1")
        if self.wall_width <= 0 or self.wall_height <= 0:
            raise ValueError("wall extent must be positive")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")

    def scan_position(self, ix: int, iy: int) -> np.ndarray:
        """Physical position of scanning point (ix, iy), z = 0."""
        x = (ix + 0.5) / self.nx * self.wall_width - self.wall_width / 2
        y = (iy + 0.5) / self.ny * self.wall_height - self.wall_height / 2
        return np.array([x, y, 0.0])

    def scan_xs(self) -> np.ndarray:
        """x coordinates of all scan columns."""
        return (np.arange(self.nx) + 0.5) / self.nx * self.wall_width - self.wall_width / 2

    def scan_ys(self) -> np.ndarray:
        """y coordinates of all scan rows."""
        return (np.arange(self.ny) + 0.5) / self.ny * self.wall_height - self.wall_height / 2

    @property
    def max_range(self) -> float:
        """Largest one-way distance resolvable by the temporal window."""
        return self.c * self.bin_width * self.n_bins / 2


@dataclass
class TransientVolume:
    """Photon-count histograms over the scanning grid.

    data has shape (ny, nx, n_bins).  Values are nonnegative after rendering
    or noise injection; autoencoder predictions may be any finite real.
    """

    geometry: ScanGeometry
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        expected = (self.geometry.ny, self.geometry.nx, self.geometry.n_bins)
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} != geometry shape {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("transient data must be finite")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def copy(self) -> "TransientVolume":
        return TransientVolume(self.geometry, self.data.copy())


@dataclass
class ReconVolume:
    """Reconstructed albedo/intensity over hidden-scene voxels.

    data has shape dims = (nz, ny, nx); voxel (iz, iy, ix) is centered at
    origin + (index + 0.5) * voxel_size along each axis, with axis order
    (z, y, x) matching dims.
    """

    origin: np.ndarray          # (3,) corner of the volume, (z, y, x) order
    voxel_size: np.ndarray      # (3,) meters per voxel, (z, y, x) order
    dims: tuple                 # (nz, ny, nx)
    data: np.ndarray = field(default=None)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.voxel_size = np.asarray(self.voxel_size, dtype=float)
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError("dims must be three counts >= 1")
        if np.any(self.voxel_size <= 0):
            raise ValueError("voxel_size must be positive on all axes")
        if self.data is None:
            self.data = np.zeros(self.dims)
        self.data = np.asarray(self.data)
        if self.data.shape != self.dims:
            raise ValueError(f"data shape {self.data.shape} != dims {self.dims}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("recon data must be finite")

    def voxel_center(self, iz: int, iy: int, ix: int) -> np.ndarray:
        return self.origin + (np.array([iz, iy, ix]) + 0.5) * self.voxel_size

    def z_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.dims[0]) + 0.5) * self.voxel_size[0]


def round_trip_bin(geometry: ScanGeometry, distance: float) -> int:
    """Time bin of a confocal round trip over the given one-way distance.

    Illumination and detection coincide, so the light path is doubled.
    Returns OUT_OF_RANGE when the bin index falls past n_bins.
    """
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    idx = int(np.floor(2.0 * distance / (geometry.c * geometry.bin_width)))
    return idx if idx < geometry.n_bins else OUT_OF_RANGE


def round_trip_bins(geometry: ScanGeometry, distances: np.ndarray) -> np.ndarray:
    """Vectorized round_trip_bin; out-of-range entries are OUT_OF_RANGE."""
    idx = np.floor(2.0 * np.asarray(distances) / (geometry.c * geometry.bin_width)).astype(np.int64)
    idx[idx >= geometry.n_bins] = OUT_OF_RANGE
    return idx


def normalize_per_transient(volume: TransientVolume) -> TransientVolume:
    """Rescale each scanning point's histogram independently into [0, 1].

    Each (iy, ix) histogram is divided by its own maximum; all-zero
    histograms pass through unchanged.  Idempotent.
    """
    peak = volume.data.max(axis=-1, keepdims=True)
    scale = np.where(peak > 0, peak, 1.0)
    return TransientVolume(volume.geometry, volume.data / scale)
