"""Volumetric reconstruction of the hidden scene from confocal transients.

Three classical solvers share one options type:

* backproject — for every voxel, sum the transient samples consistent with
  its round-trip distance to each scanning point (optionally weighted by r^4
  to undo radiometric falloff).  Brute force, directly verifiable.
* lct — change of variables v = (t c/2)^2 turns the confocal measurement
  into a 3D convolution with the light-cone kernel, inverted by a Wiener
  filter in the Fourier domain.
* fk_migrate — treat the measurements as a wavefield and remap the temporal
  frequency axis onto depth wavenumbers (Stolt interpolation), with the
  |kz|/|k| Jacobian.

All methods return a ReconVolume with dims (nz, ny, nx); the lateral grid
matches the scanning grid's physical extent.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import ReconVolume, ScanGeometry, TransientVolume
from .masking import fill_masked  # interpolation baseline for masked inputs

__all__ = [
    "ReconOptions", "backproject", "lct", "fk_migrate", "reconstruct",
    "max_projection", "depth_from_argmax", "fill_masked",
]

_FK_EPS = 1e-12


@dataclass(frozen=True)
class ReconOptions:
    """Solver choice, reconstruction grid and regularization constants.

    Grid fields default (None) to the natural resolution: nz = n_bins over
    [0, c * bin_width * n_bins / 2) in depth, and the scanning grid laterally.
    """

    method: str = "lct"
    nz: int | None = None
    ny: int | None = None
    nx: int | None = None
    z_min: float = 0.0
    z_max: float | None = None
    lct_snr: float = 1e2
    attenuation_compensation: bool = True
    laplacian_z: bool = False  # backprojection only

    def __post_init__(self):
        if self.method not in ("bp", "lct", "fk"):
            raise ValueError("method must be 'bp', 'lct' or 'fk'")
        if self.lct_snr <= 0:
            raise ValueError("lct_snr must be positive")

    def grid(self, geometry: ScanGeometry):
        """(dims, origin, voxel_size) in (z, y, x) order."""
        nz = self.nz if self.nz is not None else geometry.n_bins
        ny = self.ny if self.ny is not None else geometry.ny
        nx = self.nx if self.nx is not None else geometry.nx
        z_max = self.z_max if self.z_max is not None else geometry.max_range
        if z_max <= self.z_min:
            raise ValueError("z_max must exceed z_min")
        origin = np.array([self.z_min, -geometry.wall_height / 2, -geometry.wall_width / 2])
        voxel = np.array([(z_max - self.z_min) / nz,
                          geometry.wall_height / ny,
                          geometry.wall_width / nx])
        return (nz, ny, nx), origin, voxel


def reconstruct(volume: TransientVolume, options: ReconOptions, threads: int = 1) -> ReconVolume:
    """Dispatch on options.method."""
    if options.method == "bp":
        return backproject(volume, options, threads=threads)
    if options.method == "lct":
        return lct(volume, options, threads=threads)
    return fk_migrate(volume, options, threads=threads)


# ---------------------------------------------------------------------------
# Backprojection
# ---------------------------------------------------------------------------

def _bp_slab(out, z_lo, z_hi, zs, ys, xs, scan_x, scan_y, tau, geometry, weight_r4):
    n_bins = geometry.n_bins
    inv_ct = 2.0 / (geometry.c * geometry.bin_width)
    z2 = zs[z_lo:z_hi, None, None] ** 2
    for iy in range(geometry.ny):
        dy2 = (ys - scan_y[iy]) ** 2
        for ix in range(geometry.nx):
            hist = tau[iy, ix]
            if not hist.any():
                continue
            r2 = z2 + dy2[None, :, None] + (xs - scan_x[ix])[None, None, :] ** 2
            r = np.sqrt(r2)
            bins = np.floor(r * inv_ct).astype(np.int64)
            ok = bins < n_bins
            contrib = np.where(ok, hist[np.minimum(bins, n_bins - 1)], 0.0)
            if weight_r4:
                contrib = contrib * r2 * r2
            out[z_lo:z_hi] += contrib


def backproject(volume: TransientVolume, options: ReconOptions, threads: int = 1) -> ReconVolume:
    """Sum transient samples over every voxel's round-trip bins.

    Linear in the input; parallelizes over disjoint z slabs of the output.
    """
    g = volume.geometry
    dims, origin, voxel = options.grid(g)
    zs = origin[0] + (np.arange(dims[0]) + 0.5) * voxel[0]
    ys = origin[1] + (np.arange(dims[1]) + 0.5) * voxel[1]
    xs = origin[2] + (np.arange(dims[2]) + 0.5) * voxel[2]
    out = np.zeros(dims)

    args = (zs, ys, xs, g.scan_xs(), g.scan_ys(), volume.data, g,
            options.attenuation_compensation)
    if threads <= 1 or dims[0] == 1:
        _bp_slab(out, 0, dims[0], *args)
    else:
        bounds = np.linspace(0, dims[0], min(threads, dims[0]) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_bp_slab, out, z0, z1, *args)
                       for z0, z1 in zip(bounds[:-1], bounds[1:]) if z1 > z0]
            for fut in futures:
                fut.result()

    if options.laplacian_z:
        lap = np.zeros_like(out)
        lap[1:-1] = 2 * out[1:-1] - out[:-2] - out[2:]
        out = np.maximum(lap, 0.0)
    return ReconVolume(origin, voxel, dims, out)


# ---------------------------------------------------------------------------
# Shared resampling helpers
# ---------------------------------------------------------------------------

def _interp_last_axis(arr: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Linear interpolation of arr (..., L) at fractional sample positions.

    positions may be 1D (same for every leading cell) or match arr's leading
    shape; samples outside [0, L-1] read as 0.
    """
    length = arr.shape[-1]
    i0 = np.floor(positions).astype(np.int64)
    frac = positions - i0
    w0 = np.where((i0 >= 0) & (i0 < length), 1.0 - frac, 0.0)
    w1 = np.where((i0 + 1 >= 0) & (i0 + 1 < length), frac, 0.0)
    j0 = np.clip(i0, 0, length - 1)
    j1 = np.clip(i0 + 1, 0, length - 1)
    if positions.ndim == 1:
        return arr[..., j0] * w0 + arr[..., j1] * w1
    return (np.take_along_axis(arr, j0, axis=-1) * w0
            + np.take_along_axis(arr, j1, axis=-1) * w1)


def _resample_depth(vol_xy_z: np.ndarray, native_dz: float, options: ReconOptions,
                    geometry: ScanGeometry):
    """Pull a (ny, nx, nz_native) cube onto the requested output z grid."""
    dims, origin, voxel = options.grid(geometry)
    z_out = origin[0] + (np.arange(dims[0]) + 0.5) * voxel[0]
    pos = z_out / native_dz - 0.5
    sampled = _interp_last_axis(vol_xy_z, pos)
    return ReconVolume(origin, voxel, dims, np.transpose(sampled, (2, 0, 1)))


# ---------------------------------------------------------------------------
# Light-cone transform
# ---------------------------------------------------------------------------

def _light_cone_kernel(n: int, n_bins: int, wall_width: float, z_max: float) -> np.ndarray:
    """Discretized confocal light-cone PSF on the padded (y, x, v) grid.

    A scatterer at lateral offset (dx, dy) responds at v shifted by
    dx^2 + dy^2; the kernel marks the nearest v sample on that paraboloid.
    Lateral axes are wrap-ordered (offset 0 at index 0) so no shift is
    needed before the FFT; normalized to unit Frobenius norm.
    """
    dx = wall_width / n
    dv = z_max**2 / n_bins
    lat = np.arange(2 * n)
    lat = np.where(lat < n, lat, lat - 2 * n) * dx
    dist2 = lat[:, None] ** 2 + lat[None, :] ** 2
    j = np.round(dist2 / dv).astype(np.int64)
    kernel = np.zeros((2 * n, 2 * n, 2 * n_bins))
    iy, ix = np.nonzero(j < 2 * n_bins)
    kernel[iy, ix, j[iy, ix]] = 1.0
    return kernel / np.linalg.norm(kernel)


def lct(volume: TransientVolume, options: ReconOptions, threads: int = 1) -> ReconVolume:
    """Wiener-filtered deconvolution in light-cone coordinates.

    Steps: radiometric correction by (t c/2)^4, resampling of the time axis
    onto a uniform v = (t c/2)^2 grid, 3D Fourier deconvolution against the
    light-cone kernel with Wiener constant 1/lct_snr, resampling back to
    z = sqrt(v), and clamping negatives.
    """
    g = volume.geometry
    if g.ny != g.nx:
        raise ValueError("lct requires a square scanning grid")
    if not np.isclose(g.wall_width, g.wall_height):
        raise ValueError("lct requires a square relay wall")
    n, n_bins = g.nx, g.n_bins
    dz = g.c * g.bin_width / 2
    z_max = g.max_range
    z_centers = (np.arange(n_bins) + 0.5) * dz

    tau = volume.data
    if options.attenuation_compensation:
        tau = tau * z_centers**4

    dv = z_max**2 / n_bins
    v_centers = (np.arange(n_bins) + 0.5) * dv
    tau_v = _interp_last_axis(tau, np.sqrt(v_centers) / dz - 0.5)

    padded = np.zeros((2 * n, 2 * n, 2 * n_bins))
    padded[:n, :n, :n_bins] = tau_v
    kernel = _light_cone_kernel(n, n_bins, g.wall_width, z_max)
    f_kernel = sfft.fftn(kernel, workers=threads)
    wiener = np.conj(f_kernel) / (np.abs(f_kernel) ** 2 + 1.0 / options.lct_snr)
    recon_v = sfft.ifftn(sfft.fftn(padded, workers=threads) * wiener,
                         workers=threads).real[:n, :n, :n_bins]

    # Back from v to depth: sample the v axis at v = z^2.
    dims, origin, voxel = options.grid(g)
    z_out = origin[0] + (np.arange(dims[0]) + 0.5) * voxel[0]
    sampled = _interp_last_axis(recon_v, z_out**2 / dv - 0.5)
    return ReconVolume(origin, voxel, dims,
                       np.maximum(np.transpose(sampled, (2, 0, 1)), 0.0))


# ---------------------------------------------------------------------------
# f-k (Stolt) migration
# ---------------------------------------------------------------------------

def _fk_spectrum(data_padded: np.ndarray, threads: int = 1) -> np.ndarray:
    """Orthonormal 3D spectrum of the (y, x, z') measurement cube."""
    return sfft.fftn(data_padded, norm="ortho", workers=threads)


def fk_migrate(volume: TransientVolume, options: ReconOptions, threads: int = 1) -> ReconVolume:
    """Frequency-wavenumber migration with Stolt remapping.

    The time axis is read as depth z' = t c/2.  After the 3D transform, the
    spectrum is resampled at omega = sign(kz) * sqrt(kx^2 + ky^2 + kz^2)
    (linear interpolation) and scaled by the Stolt Jacobian |kz| / |k|;
    the squared magnitude of the inverse transform is the reconstruction.
    """
    g = volume.geometry
    n_bins = g.n_bins
    dz = g.c * g.bin_width / 2
    z_centers = (np.arange(n_bins) + 0.5) * dz

    tau = volume.data
    if options.attenuation_compensation:
        tau = tau * z_centers**4
    padded = np.zeros((g.ny, g.nx, 2 * n_bins))
    padded[:, :, :n_bins] = tau

    spectrum = sfft.fftshift(_fk_spectrum(padded, threads))
    ky = sfft.fftshift(sfft.fftfreq(g.ny, d=g.wall_height / g.ny))
    kx = sfft.fftshift(sfft.fftfreq(g.nx, d=g.wall_width / g.nx))
    kz = sfft.fftshift(sfft.fftfreq(2 * n_bins, d=dz))

    k_mag = np.sqrt(ky[:, None, None] ** 2 + kx[None, :, None] ** 2 + kz[None, None, :] ** 2)
    omega = np.sign(kz)[None, None, :] * k_mag
    pos = (omega - kz[0]) / (kz[1] - kz[0])
    remapped = _interp_last_axis(spectrum, pos)
    remapped *= np.abs(kz)[None, None, :] / np.maximum(k_mag, _FK_EPS)

    migrated = sfft.ifftn(sfft.ifftshift(remapped), norm="ortho", workers=threads)
    intensity = np.abs(migrated[:, :, :n_bins]) ** 2
    return _resample_depth(intensity, dz, options, g)


# ---------------------------------------------------------------------------
# 2D projections
# ---------------------------------------------------------------------------

def max_projection(recon: ReconVolume, axis: int = 0) -> np.ndarray:
    """Maximum-intensity projection along an axis, normalized to [0, 1]."""
    image = recon.data.max(axis=axis)
    peak = image.max()
    return image / peak if peak > 0 else image


def depth_from_argmax(recon: ReconVolume) -> np.ndarray:
    """Per-pixel depth (meters) of the strongest voxel along z."""
    iz = recon.data.argmax(axis=0)
    return recon.origin[0] + (iz + 0.5) * recon.voxel_size[0]
