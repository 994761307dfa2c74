"""Synthetic labeled phantoms used in place of licensed scan data.

Phantoms are built from explicit shape lists (ellipsoids, hollow shells)
rasterized onto the voxel grid. Intensity is derived from the organ label
plus a low-amplitude deterministic ripple so renders are reproducible
bit-for-bit for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .volume import (
    HierarchyEntry,
    LabeledVolume,
    SegmentationHierarchy,
    encode_code,
)

INTENSITY_BASE = 40
INTENSITY_PER_L2 = 15
RIPPLE_AMPLITUDE = 8.0
_RIPPLE_FREQS = (0.35, 0.27, 0.31)


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid in voxel coordinates, optionally hollow.

    ``inner_fraction`` > 0 keeps only the shell outside that fraction of
    the radii, producing a nested-shell organ.
    """

    center: tuple[float, float, float]  # (cx, cy, cz) voxels
    radii: tuple[float, float, float]
    l1: int
    l2: int
    l3: int = 0
    inner_fraction: float = 0.0

    def __post_init__(self):
        encode_code(self.l1, self.l2, self.l3)  # validates ranges
        if self.l1 == 0 and self.l2 == 0 and self.l3 == 0:
            raise GeometryError("shape label must be nonbackground")
        if min(self.radii) <= 0:
            raise GeometryError(f"radii must be positive, got {self.radii}")
        if not 0.0 <= self.inner_fraction < 1.0:
            raise GeometryError(f"inner_fraction outside [0, 1): {self.inner_fraction}")


def generate_phantom(
    dims: tuple[int, int, int],
    spacing: tuple[float, float, float],
    organs: list[Ellipsoid],
    seed: int = 0,
) -> LabeledVolume:
    """Rasterize shapes onto a fresh grid; later shapes overwrite earlier ones."""
    nx, ny, nz = dims
    if min(nx, ny, nz) < 8:
        raise GeometryError(f"dims must be at least 8 per axis, got {dims}")

    for organ in organs:
        for axis, (c, r, n) in enumerate(zip(organ.center, organ.radii, dims)):
            if c - r < 0 or c + r > n - 1:
                raise GeometryError(
                    f"shape ({organ.l1},{organ.l2}) leaves the grid on axis {axis}: "
                    f"center {c} radius {r} vs size {n}"
                )

    labels = np.zeros((nz, ny, nx), dtype=np.uint16)
    zz, yy, xx = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    for organ in organs:
        cx, cy, cz = organ.center
        rx, ry, rz = organ.radii
        q = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 + ((zz - cz) / rz) ** 2
        mask = q <= 1.0
        if organ.inner_fraction > 0.0:
            mask &= q > organ.inner_fraction**2
        labels[mask] = encode_code(organ.l1, organ.l2, organ.l3)

    intensity = _intensity_from_labels(labels, seed)
    return LabeledVolume(intensity, labels, spacing)


def _intensity_from_labels(labels: np.ndarray, seed: int) -> np.ndarray:
    nz, ny, nx = labels.shape
    rng = np.random.default_rng(seed)
    px, py, pz = rng.uniform(0.0, 2.0 * np.pi, 3)
    fx, fy, fz = _RIPPLE_FREQS
    ripple = (
        RIPPLE_AMPLITUDE
        * np.sin(np.arange(nx) * fx + px)[None, None, :]
        * np.sin(np.arange(ny) * fy + py)[None, :, None]
        * np.sin(np.arange(nz) * fz + pz)[:, None, None]
    )
    l2 = (labels.astype(np.int32) >> 7) & 0xF
    base = INTENSITY_BASE + INTENSITY_PER_L2 * l2
    value = np.where(labels == 0, 0.0, base + np.rint(ripple))
    return np.clip(value, 0, 255).astype(np.uint8)


def growing_disk_volume(
    nx: int = 64,
    ny: int = 64,
    nz: int = 60,
    r0: float = 8.0,
    dr: float = 0.2,
    l1: int = 2,
    l2: int = 3,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    seed: int = 0,
) -> LabeledVolume:
    """Disk stack whose radius grows linearly with z (dense ground truth)."""
    code = encode_code(l1, l2, 0)
    labels = np.zeros((nz, ny, nx), dtype=np.uint16)
    yy, xx = np.meshgrid(np.arange(ny, dtype=np.float64), np.arange(nx, dtype=np.float64), indexing="ij")
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    rr = (xx - cx) ** 2 + (yy - cy) ** 2
    for z in range(nz):
        radius = r0 + dr * z
        labels[z][rr <= radius**2] = code
    return LabeledVolume(_intensity_from_labels(labels, seed), labels, spacing)


def sparsify_slices(volume: LabeledVolume, stride: int) -> LabeledVolume:
    """Blank the label grid except every ``stride``-th slice (slice 0 kept)."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    labels = volume.labels.copy()
    for z in range(labels.shape[0]):
        if z % stride != 0:
            labels[z] = 0
    return LabeledVolume(volume.intensity, labels, volume.spacing)


# ---------------------------------------------------------------------------
# presets shared by the CLI and the test suite

_PRESET_HIERARCHY = SegmentationHierarchy(
    (
        HierarchyEntry(1, 1, "outer-capsule", (200, 180, 150, 90)),
        HierarchyEntry(2, 3, "round-organ", (220, 60, 60, 220)),
        HierarchyEntry(2, 4, "oval-organ", (70, 130, 220, 220)),
        HierarchyEntry(3, 1, "small-node", (90, 200, 90, 255)),
    )
)


def preset_hierarchy() -> SegmentationHierarchy:
    return _PRESET_HIERARCHY


def preset_phantom(name: str, size: int = 64, seed: int = 0) -> LabeledVolume:
    """Named phantom presets: 'sphere', 'three-organs', 'growing-disk'."""
    spacing = (1.0, 1.0, 1.0)
    c = (size - 1) / 2.0
    if name == "sphere":
        organs = [Ellipsoid((c, c, c), (10.0, 10.0, 10.0), 2, 3)]
    elif name == "three-organs":
        organs = [
            Ellipsoid((c * 0.62, c, c), (10.0, 10.0, 10.0), 2, 3),
            Ellipsoid((c * 1.42, c * 0.88, c), (8.0, 6.0, 6.0), 2, 4),
            Ellipsoid((c, c * 1.5, c), (9.0, 9.0, 9.0), 1, 1, inner_fraction=0.62),
        ]
    elif name == "growing-disk":
        return growing_disk_volume(size, size, max(16, size - 4), seed=seed)
    else:
        raise ValueError(f"unknown phantom preset {name!r}")
    return generate_phantom((size, size, size), spacing, organs, seed=seed)


PRESET_NAMES = ("sphere", "three-organs", "growing-disk")
