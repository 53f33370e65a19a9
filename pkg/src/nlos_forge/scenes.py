"""Procedural hidden scenes: point-cloud objects placed in front of the wall.

Scenes are point emitters with diffuse albedo, which is all the forward model
needs.  Each primitive is built at unit size centered on the origin, then
scaled, rotated about its nominal center, and translated into the z > 0
half-space according to ranges drawn from a seeded counter-based generator,
so generation is deterministic and order-independent across workers.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .core import ScanGeometry, normalize_per_transient

PRIMITIVES = ("plane-letter", "sphere", "box", "two-plane", "random-blob")

# 5x7 bitmaps, row 0 = top of the glyph.
_LETTER_BITMAPS = {
    "T": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    "L": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "H": ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "O": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "X": ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
    "U": ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "E": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "I": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"],
}

# Farthest reach of each unit primitive from its center: used to prove,
# before sampling, that no placement can put a point at z <= 0.
_BOUNDING_RADIUS = {
    "plane-letter": np.sqrt(2.0),
    "sphere": 1.0,
    "box": np.sqrt(3.0),
    "two-plane": np.sqrt(0.35**2 + 1.05**2 + 0.6**2),
    "random-blob": 1.4,
}
# Downward z reach of each unrotated unit primitive.
_FLAT_Z_REACH = {
    "plane-letter": 0.0,
    "sphere": 1.0,
    "box": 1.0,
    "two-plane": 0.35,
    "random-blob": 1.4,
}


@dataclass
class HiddenScene:
    """Point emitters of a hidden object: positions (z > 0) and albedos."""

    points: np.ndarray          # (P, 3) positions in meters, (x, y, z)
    albedo: np.ndarray          # (P,) diffuse albedo, >= 0
    label: str | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.albedo = np.asarray(self.albedo, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) == 0:
            raise ValueError("points must be a non-empty (P, 3) array")
        if self.albedo.shape != (len(self.points),):
            raise ValueError("albedo must be one value per point")
        if np.any(self.points[:, 2] <= 0):
            raise ValueError("all scene points must have z > 0 (hidden side of the wall)")
        if np.any(self.albedo < 0):
            raise ValueError("albedo must be nonnegative")


@dataclass
class SceneSpec:
    """Randomized placement recipe for one procedural object.

    Ranges are inclusive [lo, hi]; a degenerate range pins the value.  The
    default z/scale ranges are toolkit choices for desk-scale scenes; specs
    whose ranges could place any point at z <= 0 are rejected up front.
    """

    primitive: str = "plane-letter"
    sample_count: int = 1000
    z_range: tuple = (0.4, 1.2)
    scale_range: tuple = (0.3, 1.0)
    x_range: tuple = (0.0, 0.0)
    y_range: tuple = (0.0, 0.0)
    rotation: tuple = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))  # Euler xyz ranges, radians
    letter: str = "T"
    albedo: float = 1.0
    seed: int = 0
    label: str | None = None

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.primitive!r}; choose from {PRIMITIVES}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        z_min, z_max = self.z_range
        s_min, s_max = self.scale_range
        if z_min <= 0 or z_min > z_max:
            raise ValueError("z_range must satisfy 0 < z_min <= z_max")
        if s_min <= 0 or s_min > s_max:
            raise ValueError("scale_range must satisfy 0 < s_min <= s_max")
        if self.primitive == "plane-letter" and self.letter not in _LETTER_BITMAPS:
            raise ValueError(f"no bitmap for letter {self.letter!r}; have {sorted(_LETTER_BITMAPS)}")
        # Worst-case downward reach over every placement the ranges permit.
        if any(lo != 0.0 or hi != 0.0 for lo, hi in self.rotation):
            reach = _BOUNDING_RADIUS[self.primitive]
        else:
            reach = _FLAT_Z_REACH[self.primitive]
        if z_min - s_max * reach <= 0:
            raise ValueError(
                f"placement ranges permit z <= 0: z_min={z_min} minus worst-case "
                f"object reach {s_max * reach:.3f} is not positive"
            )

    @property
    def effective_label(self) -> str:
        return self.label if self.label is not None else self.primitive


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return lo if lo == hi else float(rng.uniform(lo, hi))


def _sample_sphere(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_box(rng, n):
    # Cube with half-edge 1: pick a face uniformly, then a point on it.
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    rows = np.arange(n)
    other = np.array([[1, 2], [0, 2], [0, 1]])[axis]
    pts[rows, axis] = np.where(face % 2 == 0, -1.0, 1.0)
    pts[rows, other[:, 0]] = uv[:, 0]
    pts[rows, other[:, 1]] = uv[:, 1]
    return pts


def _sample_letter(rng, n, letter):
    rows = _LETTER_BITMAPS[letter]
    lit = np.array([(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "#"])
    nr, nc = len(rows), len(rows[0])
    cell = lit[rng.integers(0, len(lit), size=n)]
    jitter = rng.uniform(0.0, 1.0, size=(n, 2))
    # Map bitmap cells onto [-1, 1]^2, preserving aspect, row 0 at the top.
    grid = max(nr, nc)
    x = (cell[:, 1] + jitter[:, 0] - nc / 2) * (2.0 / grid)
    y = (nr / 2 - cell[:, 0] - jitter[:, 1]) * (2.0 / grid)
    return np.stack([x, y, np.zeros(n)], axis=1)


def _sample_two_plane(rng, n):
    # Two parallel square panels, offset laterally and in depth.
    which = rng.integers(0, 2, size=n)
    uv = rng.uniform(-0.6, 0.6, size=(n, 2))
    x = uv[:, 0] + np.where(which == 0, -0.45, 0.45)
    y = uv[:, 1]
    z = np.where(which == 0, -0.35, 0.35)
    return np.stack([x, y, z], axis=1)


def _sample_blob(rng, n):
    # Sphere with a smooth random radius field; radius stays in [0.6, 1.4].
    bumps = _sample_sphere(rng, 4)
    weights = rng.uniform(-0.1, 0.1, size=4)
    dirs = _sample_sphere(rng, n)
    r = 1.0 + (weights * (dirs @ bumps.T) ** 2).sum(axis=1)
    return dirs * r[:, None]


def generate_scene(spec: SceneSpec) -> HiddenScene:
    """Sample a hidden scene from the spec, deterministically in the seed."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))

    if spec.primitive == "sphere":
        base = _sample_sphere(rng, spec.sample_count)
    elif spec.primitive == "box":
        base = _sample_box(rng, spec.sample_count)
    elif spec.primitive == "plane-letter":
        base = _sample_letter(rng, spec.sample_count, spec.letter)
    elif spec.primitive == "two-plane":
        base = _sample_two_plane(rng, spec.sample_count)
    else:
        base = _sample_blob(rng, spec.sample_count)

    scale = _uniform(rng, *spec.scale_range)
    angles = [_uniform(rng, lo, hi) for lo, hi in spec.rotation]
    tx = _uniform(rng, *spec.x_range)
    ty = _uniform(rng, *spec.y_range)
    tz = _uniform(rng, *spec.z_range)

    pts = base * scale
    if any(a != 0.0 for a in angles):
        pts = pts @ Rotation.from_euler("xyz", angles).as_matrix().T
    pts = pts + np.array([tx, ty, tz])

    if np.any(pts[:, 2] <= 0):
        raise ValueError("generated scene reached z <= 0; placement ranges too tight")
    return HiddenScene(pts, np.full(spec.sample_count, spec.albedo), label=spec.effective_label)


def generate_dataset(
    specs: list,
    geometry: ScanGeometry,
    output_dir,
    render_options=None,
) -> list[dict]:
    """Render one normalized transient container per spec, plus a manifest.

    Resumable: container files that already exist and read back cleanly are
    kept.  Per-file I/O failures are reported in the returned rows (status
    column stays out of the manifest, which lists successes only).
    """
    from . import io as nio
    from .renderer import RenderOptions, render_confocal

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    options = render_options if render_options is not None else RenderOptions()

    rows, failures = [], []
    for i, spec in enumerate(specs):
        name = f"scene_{i:04d}.trnv"
        path = output_dir / name
        if path.exists():
            try:
                existing = nio.read_transient(path)
                if existing.data.shape == (geometry.ny, geometry.nx, geometry.n_bins):
                    rows.append({"file": name, "seed": spec.seed,
                                 "primitive": spec.primitive, "label": spec.effective_label})
                    continue
            except (nio.FormatError, OSError):
                pass  # regenerate below
        try:
            volume = render_confocal(generate_scene(spec), geometry, options)
            nio.write_transient(path, normalize_per_transient(volume))
            rows.append({"file": name, "seed": spec.seed,
                         "primitive": spec.primitive, "label": spec.effective_label})
        except OSError as exc:
            failures.append((name, exc))

    manifest = output_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file", "seed", "primitive", "label"])
        writer.writeheader()
        writer.writerows(rows)

    for name, exc in failures:
        warnings.warn(f"dataset generation failed for {name}: {exc}")
    return rows


def read_manifest(path) -> list[dict]:
    """Rows of a dataset manifest CSV."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
