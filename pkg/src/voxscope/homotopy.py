"""Cubic Hermite blending of consecutive slice distance fields.

A slab blends three consecutive per-label signed distance slices
(phi_i, phi_i1, phi_i2) over a parameter lam in [0, 1]:

    H(x, lam) = 0.5 * ( (2 - lam - 4 lam^2 + 3 lam^3)  phi_i(x)
                      + (lam + 5 lam^2 - 4 lam^3)      phi_i1(x)
                      + (-lam^2 + lam^3)               phi_i2(x) )

so that H(x, 0) = phi_i(x), H(x, 1) = phi_i1(x), with end slopes
0.5 (phi_i1 - phi_i) at lam=0 and 0.5 (phi_i2 - phi_i1) at lam=1. The
matched end slopes make consecutive slabs join with a continuous
lam-derivative. Dense resampling assigns each interpolated voxel the
label whose blended field is most negative (background if none is
negative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InsufficientSlicesError
from .sdf import SignedDistanceSlice, signed_distance_2d
from .volume import LabeledVolume


def blend_weights(lam: float | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blending weights (w_i, w_i1, w_i2) at ``lam``."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError(f"lam outside [0, 1]: {lam}")
    l2 = lam * lam
    l3 = l2 * lam
    w0 = 0.5 * (2.0 - lam - 4.0 * l2 + 3.0 * l3)
    w1 = 0.5 * (lam + 5.0 * l2 - 4.0 * l3)
    w2 = 0.5 * (-l2 + l3)
    return w0, w1, w2


def blend_weight_derivatives(
    lam: float | np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """d/dlam of the blending weights."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError(f"lam outside [0, 1]: {lam}")
    l2 = lam * lam
    d0 = 0.5 * (-1.0 - 8.0 * lam + 9.0 * l2)
    d1 = 0.5 * (1.0 + 10.0 * lam - 12.0 * l2)
    d2 = 0.5 * (-2.0 * lam + 3.0 * l2)
    return d0, d1, d2


@dataclass(frozen=True)
class HomotopySlab:
    """Three consecutive signed distance slices sharing dims and label."""

    phi_i: SignedDistanceSlice
    phi_i1: SignedDistanceSlice
    phi_i2: SignedDistanceSlice

    def __post_init__(self):
        dims = self.phi_i.dims
        if self.phi_i1.dims != dims or self.phi_i2.dims != dims:
            raise DimensionError(
                f"slab slices disagree on dims: {dims}, {self.phi_i1.dims}, {self.phi_i2.dims}"
            )
        labels = {self.phi_i.label, self.phi_i1.label, self.phi_i2.label}
        if len(labels) != 1:
            raise ValueError(f"slab slices carry different labels: {labels}")


def _bilinear(grid: np.ndarray, x: float, y: float) -> float:
    ny, nx = grid.shape
    if not (0.0 <= x <= nx - 1 and 0.0 <= y <= ny - 1):
        raise ValueError(f"point ({x}, {y}) outside grid {nx}x{ny}")
    x0 = min(int(np.floor(x)), nx - 2) if nx > 1 else 0
    y0 = min(int(np.floor(y)), ny - 2) if ny > 1 else 0
    fx = x - x0
    fy = y - y0
    g = grid
    return float(
        (1 - fy) * ((1 - fx) * g[y0, x0] + fx * g[y0, x0 + 1])
        + fy * ((1 - fx) * g[y0 + 1, x0] + fx * g[y0 + 1, x0 + 1])
    )


def homotopy_eval(slab: HomotopySlab, x: tuple[float, float], lam: float) -> float:
    """Blended field value at 2D grid point ``x`` (bilinear in-plane)."""
    w0, w1, w2 = blend_weights(lam)
    px, py = x
    return float(
        w0 * _bilinear(slab.phi_i.grid, px, py)
        + w1 * _bilinear(slab.phi_i1.grid, px, py)
        + w2 * _bilinear(slab.phi_i2.grid, px, py)
    )


def homotopy_derivative(slab: HomotopySlab, x: tuple[float, float], lam: float) -> float:
    """Analytic lam-derivative of the blended field at ``x``."""
    d0, d1, d2 = blend_weight_derivatives(lam)
    px, py = x
    return float(
        d0 * _bilinear(slab.phi_i.grid, px, py)
        + d1 * _bilinear(slab.phi_i1.grid, px, py)
        + d2 * _bilinear(slab.phi_i2.grid, px, py)
    )


def homotopy_field(slab: HomotopySlab, lam: float) -> np.ndarray:
    """Blended field over the whole slice grid."""
    w0, w1, w2 = blend_weights(lam)
    return w0 * slab.phi_i.grid + w1 * slab.phi_i1.grid + w2 * slab.phi_i2.grid


def resample_labels(
    sparse_slices: np.ndarray,
    stride: int,
    out_nz: int | None = None,
) -> np.ndarray:
    """Upsample sparse label slices into a dense label grid.

    ``sparse_slices`` has shape (m, ny, nx) and holds the labeled slices in
    order; consecutive entries are ``stride`` output slices apart. Output
    slices at integer input positions reproduce the inputs exactly; in
    between, each voxel takes the label whose blended distance field is
    most negative (background when none is negative). The final slab reuses
    its middle slice as the third operand, and output positions past the
    last input clamp to it.
    """
    sparse_slices = np.asarray(sparse_slices)
    if sparse_slices.ndim != 3:
        raise DimensionError(f"need (m, ny, nx) slices, got shape {sparse_slices.shape}")
    m = sparse_slices.shape[0]
    if m < 3:
        raise InsufficientSlicesError(f"need at least 3 slices, got {m}")
    if stride < 2:
        raise ValueError(f"stride must be >= 2, got {stride}")
    if out_nz is None:
        out_nz = (m - 1) * stride + 1

    codes = np.unique(sparse_slices)
    codes = [int(c) for c in codes if c != 0]
    fields = {
        code: np.stack(
            [signed_distance_2d(sparse_slices[i] == code).grid for i in range(m)]
        )
        for code in codes
    }

    ny, nx = sparse_slices.shape[1:]
    out = np.zeros((out_nz, ny, nx), dtype=sparse_slices.dtype)
    for z in range(out_nz):
        i, r = divmod(z, stride)
        if i >= m - 1:
            out[z] = sparse_slices[m - 1]
            continue
        if r == 0:
            out[z] = sparse_slices[i]
            continue
        w0, w1, w2 = blend_weights(r / stride)
        best_value = None
        best_code = None
        for code in codes:
            phi = fields[code]
            i2 = i + 2 if i + 2 < m else i + 1
            blended = w0 * phi[i] + w1 * phi[i + 1] + w2 * phi[i2]
            if best_value is None:
                best_value = blended
                best_code = np.full((ny, nx), code, dtype=sparse_slices.dtype)
            else:
                better = blended < best_value
                best_value = np.where(better, blended, best_value)
                best_code = np.where(better, code, best_code)
        if best_value is not None:
            out[z] = np.where(best_value < 0.0, best_code, 0)
    return out


def resample_volume(volume: LabeledVolume, stride: int) -> LabeledVolume:
    """Volume-level wrapper: labels live on every ``stride``-th slice."""
    if stride == 1:
        return volume
    nz = volume.labels.shape[0]
    kept = list(range(0, nz, stride))
    if len(kept) < 3:
        raise InsufficientSlicesError(
            f"stride {stride} leaves only {len(kept)} labeled slices of {nz}"
        )
    sparse = volume.labels[::stride]
    dense = resample_labels(sparse, stride, out_nz=nz)
    return LabeledVolume(volume.intensity, dense, volume.spacing)
