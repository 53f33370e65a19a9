"""Confocal NLOS forward model.

Each scanning point illuminates the scene and records the returning spherical
wavefront.  For scene point v with albedo rho seen from scanning point p at
distance r, the renderer deposits rho / r^falloff into the time bin of the
round trip (or splits it across the two straddling bins in linear mode).
Contributions past the temporal window are dropped; no occlusion or
interreflection is modeled.

The per-scanning-point histograms are independent, so the scan grid is
rendered in row stripes that own disjoint output slices; stripes can run on a
thread pool without locking and the result is schedule-independent.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ScanGeometry, TransientVolume
from .scenes import HiddenScene


@dataclass(frozen=True)
class RenderOptions:
    """Radiometric and binning knobs of the forward model.

    falloff_exponent 4 is the confocal default (r^2 out, r^2 back);
    exponent 0 turns falloff off for energy-bookkeeping tests.
    include_cosine adds the wall-normal foreshortening cos^2 term (one cosine
    per leg of the round trip).
    """

    falloff_exponent: int = 4
    include_cosine: bool = False
    bin_weighting: str = "nearest"  # or "linear"

    def __post_init__(self):
        if self.falloff_exponent not in (0, 2, 4):
            raise ValueError("falloff_exponent must be 0, 2 or 4")
        if self.bin_weighting not in ("nearest", "linear"):
            raise ValueError("bin_weighting must be 'nearest' or 'linear'")


def _render_rows(out, y0, y1, xs, ys, points, albedo, geometry, options):
    """Accumulate scene contributions into out[y0:y1] (a disjoint slice)."""
    n_bins = geometry.n_bins
    inv_ct = 2.0 / (geometry.c * geometry.bin_width)
    flat = out[y0:y1].reshape(-1)
    n_rows = y1 - y0
    pix = (np.arange(n_rows)[:, None] * len(xs) + np.arange(len(xs))[None, :]) * n_bins
    for v, rho in zip(points, albedo):
        dx2 = (xs - v[0]) ** 2
        dy2 = (ys[y0:y1] - v[1]) ** 2
        r = np.sqrt(dy2[:, None] + dx2[None, :] + v[2] ** 2)
        amp = np.full_like(r, rho) if options.falloff_exponent == 0 else rho / r ** options.falloff_exponent
        if options.include_cosine:
            amp = amp * (v[2] / r) ** 2
        u = r * inv_ct
        if options.bin_weighting == "nearest":
            b = np.floor(u).astype(np.int64)
            ok = b < n_bins
            np.add.at(flat, (pix + b)[ok], amp[ok])
        else:
            # Split between the bins whose centers straddle the arrival time.
            f = u - 0.5
            k0 = np.floor(f).astype(np.int64)
            w1 = f - k0
            ok0 = (k0 >= 0) & (k0 < n_bins)
            ok1 = (k0 + 1 >= 0) & (k0 + 1 < n_bins)
            np.add.at(flat, (pix + k0)[ok0], (amp * (1.0 - w1))[ok0])
            np.add.at(flat, (pix + k0 + 1)[ok1], (amp * w1)[ok1])


def render_confocal(
    scene: HiddenScene,
    geometry: ScanGeometry,
    options: RenderOptions = RenderOptions(),
    threads: int = 1,
) -> TransientVolume:
    """Render the scene into a transient volume over the scanning grid."""
    if len(scene.points) == 0:
        raise ValueError("scene must contain at least one point")
    xs = geometry.scan_xs()
    ys = geometry.scan_ys()
    out = np.zeros((geometry.ny, geometry.nx, geometry.n_bins))

    if threads <= 1 or geometry.ny == 1:
        _render_rows(out, 0, geometry.ny, xs, ys, scene.points, scene.albedo, geometry, options)
    else:
        bounds = np.linspace(0, geometry.ny, min(threads, geometry.ny) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_render_rows, out, y0, y1, xs, ys,
                            scene.points, scene.albedo, geometry, options)
                for y0, y1 in zip(bounds[:-1], bounds[1:]) if y1 > y0
            ]
            for fut in futures:
                fut.result()
    return TransientVolume(geometry, out)


def downsample_spatial(volume: TransientVolume, factor: int) -> TransientVolume:
    """Sum factor x factor blocks of histograms; photon count is conserved."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    g = volume.geometry
    if g.ny % factor or g.nx % factor:
        raise ValueError(f"grid {g.ny}x{g.nx} not divisible by factor {factor}")
    if factor == 1:
        return volume.copy()
    ny, nx = g.ny // factor, g.nx // factor
    data = volume.data.reshape(ny, factor, nx, factor, g.n_bins).sum(axis=(1, 3))
    geo = ScanGeometry(g.wall_width, g.wall_height, nx, ny, g.n_bins, g.bin_width, g.c)
    return TransientVolume(geo, data)
