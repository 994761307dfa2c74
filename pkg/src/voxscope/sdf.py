"""Exact 2D signed Euclidean distance fields for binary slice masks.

The unsigned transform is the classic two-pass method: per-column scans
produce the nearest set pixel along y, then a per-row lower envelope of
parabolas yields exact squared Euclidean distances. The signed field is

    +(d_to_mask - 0.5)    outside the mask
    -(d_to_background - 0.5)  inside the mask

in pixel units (scaled by ``pixel_size``), which places the zero crossing
on the half-pixel boundary between inside and outside pixel centers:
inside pixels are always <= -0.5 px and outside pixels >= +0.5 px.
Degenerate masks get a +/- sentinel of one grid diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def _column_pass(mask: np.ndarray) -> np.ndarray:
    """Distance along axis 0 to the nearest True in each column (inf if none)."""
    ny, nx = mask.shape
    inf = np.inf
    dist = np.where(mask, 0.0, inf)
    for y in range(1, ny):
        dist[y] = np.minimum(dist[y], dist[y - 1] + 1.0)
    for y in range(ny - 2, -1, -1):
        dist[y] = np.minimum(dist[y], dist[y + 1] + 1.0)
    return dist


def _row_envelope(f: np.ndarray) -> np.ndarray:
    """1D squared-distance transform min_x'((x-x')^2 + f(x')) via lower envelope.

    ``f`` must contain at least one finite value; infinite sites never win
    and are skipped.
    """
    n = f.shape[0]
    sites = np.flatnonzero(np.isfinite(f))
    v = np.empty(sites.shape[0], dtype=np.int64)  # winning parabola sites
    z = np.empty(sites.shape[0] + 1)  # envelope breakpoints
    k = 0
    v[0] = sites[0]
    z[0] = -np.inf
    z[1] = np.inf
    for q in sites[1:]:
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    d = np.empty(n)
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        d[q] = (q - p) ** 2 + f[p]
    return d


def euclidean_distance(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (pixels) from every pixel to the nearest True."""
    if mask.ndim != 2 or 0 in mask.shape:
        raise DimensionError(f"need a non-empty 2D mask, got shape {mask.shape}")
    if not mask.any():
        return np.full(mask.shape, np.inf)
    col = _column_pass(mask.astype(bool))
    sq = col * col
    out = np.empty_like(sq)
    for y in range(mask.shape[0]):
        out[y] = _row_envelope(sq[y])
    return np.sqrt(out)


@dataclass(frozen=True)
class SignedDistanceSlice:
    """Per-label signed distance field for one slice, negative inside."""

    grid: np.ndarray  # float64, shape (ny, nx), units of pixel_size
    pixel_size: float = 1.0
    label: tuple[int, int] | None = None
    slice_index: int = 0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def dims(self) -> tuple[int, int]:
        ny, nx = self.grid.shape
        return nx, ny


def signed_distance_2d(
    mask: np.ndarray,
    pixel_size: float = 1.0,
    label: tuple[int, int] | None = None,
    slice_index: int = 0,
) -> SignedDistanceSlice:
    """Signed distance field of a binary mask (see module docstring)."""
    if mask.ndim != 2 or 0 in mask.shape:
        raise DimensionError(f"need a non-empty 2D mask, got shape {mask.shape}")
    mask = mask.astype(bool)
    ny, nx = mask.shape
    sentinel = float(np.hypot(nx, ny))

    if not mask.any():
        grid = np.full(mask.shape, sentinel)
    elif mask.all():
        grid = np.full(mask.shape, -sentinel)
    else:
        d_to_mask = euclidean_distance(mask)
        d_to_background = euclidean_distance(~mask)
        grid = np.where(mask, -(d_to_background - 0.5), d_to_mask - 0.5)
    return SignedDistanceSlice(grid * pixel_size, pixel_size, label, slice_index)
