"""Gaze-centered reduced-resolution frame mapping, encoding and decoding.

Each image axis gets a monotone piecewise-linear warp from reduced pixel
space to full pixel space: unit density (one reduced pixel per full pixel)
inside a gaze-centered rectangle, a single compressed linear slope on each
side. Rendering casts exactly one ray per reduced pixel through its mapped
full-space position, so the pixel budget shrinks by the reduction factor
squared; reconstruction bilinearly resamples through the inverse warp and
is exact inside the rectangle.

Wire layout (little endian): frame_id u64, eye u8 (0 left / 1 right /
2 mono), W u16, H u16, w u16, h u16, gaze_x f32, gaze_y f32,
fovea_radius f32, reduction f32, then 4*w*h RGBA8 bytes. Float parameters
are quantized to f32 *before* the mapping is built so both ends of the
wire derive bit-identical warps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ProtocolError

_HEADER = struct.Struct("<QBHHHHffff")
EYE_CODES = {"left": 0, "right": 1, "mono": 2}
EYE_NAMES = {v: k for k, v in EYE_CODES.items()}


def _axis_knots(full: int, reduced: int, gaze: float, radius: float) -> np.ndarray:
    """Full-space coordinates of the ``reduced`` sample centers along one axis."""
    if reduced >= full:
        return np.arange(full, dtype=np.float64) + 0.5

    fa = int(np.floor(gaze - radius))
    fb = int(np.ceil(gaze + radius))
    fa = max(0, min(fa, full))
    fb = max(0, min(fb, full))
    budget = reduced - (1 if fa > 0 else 0) - (1 if fb < full else 0)
    if fb - fa > budget:
        width = max(0, budget)
        fa = int(round(gaze - width / 2.0))
        fa = max(0, min(fa, full - width))
        fb = fa + width
    fw = fb - fa
    left_full = fa
    right_full = full - fb
    periphery = reduced - fw

    if left_full == 0:
        left_reduced = 0
    elif right_full == 0:
        left_reduced = periphery
    else:
        left_reduced = int(round(periphery * left_full / (left_full + right_full)))
        left_reduced = max(1, min(left_reduced, periphery - 1))
    right_reduced = periphery - left_reduced

    parts = []
    if left_reduced:
        parts.append((np.arange(left_reduced) + 0.5) * (left_full / left_reduced))
    if fw:
        parts.append(fa + 0.5 + np.arange(fw, dtype=np.float64))
    if right_reduced:
        parts.append(fb + (np.arange(right_reduced) + 0.5) * (right_full / right_reduced))
    return np.concatenate(parts)


@dataclass(frozen=True)
class FoveaMapping:
    """Bijective monotone warp between reduced and full pixel grids."""

    full_dims: tuple[int, int]  # (W, H)
    reduced_dims: tuple[int, int]  # (w, h)
    gaze: tuple[float, float]
    fovea_radius: float
    reduction: float
    knots_x: np.ndarray  # (w,) full-space x of reduced sample centers
    knots_y: np.ndarray  # (h,)

    def __post_init__(self):
        for arr in (self.knots_x, self.knots_y):
            arr.setflags(write=False)
        if np.any(np.diff(self.knots_x) <= 0) or np.any(np.diff(self.knots_y) <= 0):
            raise CapacityError("warp knots must be strictly increasing")


def build_mapping(
    full_dims: tuple[int, int],
    reduction: float,
    gaze: tuple[float, float],
    fovea_radius: float | None = None,
) -> FoveaMapping:
    """Warp for a per-axis ``reduction`` factor centered on ``gaze``."""
    wf, hf = (int(full_dims[0]), int(full_dims[1]))
    reduction = float(np.float32(reduction))
    if reduction < 1.0:
        raise ValueError(f"reduction must be >= 1, got {reduction}")
    if fovea_radius is None:
        fovea_radius = min(wf, hf) / 6.0
    fovea_radius = float(np.float32(fovea_radius))
    gx = float(np.float32(min(max(gaze[0], 0.0), wf - 1)))
    gy = float(np.float32(min(max(gaze[1], 0.0), hf - 1)))

    wr = int(round(wf / reduction))
    hr = int(round(hf / reduction))
    if wr < 4 or hr < 4:
        raise CapacityError(f"reduced dims {wr}x{hr} below the 4 px minimum")
    wr = min(wr, wf)
    hr = min(hr, hf)
    return FoveaMapping(
        full_dims=(wf, hf),
        reduced_dims=(wr, hr),
        gaze=(gx, gy),
        fovea_radius=fovea_radius,
        reduction=reduction,
        knots_x=_axis_knots(wf, wr, gx, fovea_radius),
        knots_y=_axis_knots(hf, hr, gy, fovea_radius),
    )


def _forward_axis(knots: np.ndarray, full: int, r: np.ndarray) -> np.ndarray:
    """Reduced coordinate -> full coordinate, linear between sample centers."""
    w = knots.shape[0]
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0.0) or np.any(r > w):
        raise ValueError(f"reduced coordinate outside [0, {w}]")
    centers = np.arange(w) + 0.5
    left_slope = knots[0] / 0.5 if w else 1.0
    right_slope = (full - knots[-1]) / 0.5
    seg = np.clip(np.searchsorted(centers, r, side="right") - 1, -1, w - 1)
    out = np.empty_like(r)
    low = seg < 0
    high = (seg == w - 1) & (r > centers[-1])
    mid = ~(low | high)
    out[low] = r[low] * left_slope
    out[high] = knots[-1] + (r[high] - centers[-1]) * right_slope
    s = seg[mid]
    out[mid] = knots[s] + (r[mid] - centers[s]) * (
        np.where(s + 1 < w, knots[np.minimum(s + 1, w - 1)], full) - knots[s]
    ) / np.where(s + 1 < w, centers[np.minimum(s + 1, w - 1)] - centers[s], 1.0)
    return out


def _inverse_axis(knots: np.ndarray, full: int, u: np.ndarray) -> np.ndarray:
    """Full coordinate -> reduced coordinate (exact inverse at sample centers)."""
    w = knots.shape[0]
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u > full):
        raise ValueError(f"full coordinate outside [0, {full}]")
    seg = np.searchsorted(knots, u, side="right") - 1
    out = np.empty_like(u)
    low = seg < 0
    high = seg >= w - 1
    mid = ~(low | high)
    out[low] = u[low] / knots[0] * 0.5
    out[high] = (w - 0.5) + (u[high] - knots[-1]) / (full - knots[-1]) * 0.5
    s = seg[mid]
    out[mid] = (s + 0.5) + (u[mid] - knots[s]) / (knots[s + 1] - knots[s])
    return out


def map_to_full(mapping: FoveaMapping, reduced_px: tuple[float, float]) -> tuple[float, float]:
    fx = _forward_axis(mapping.knots_x, mapping.full_dims[0], np.asarray([reduced_px[0]]))
    fy = _forward_axis(mapping.knots_y, mapping.full_dims[1], np.asarray([reduced_px[1]]))
    return float(fx[0]), float(fy[0])


def map_to_reduced(mapping: FoveaMapping, full_px: tuple[float, float]) -> tuple[float, float]:
    rx = _inverse_axis(mapping.knots_x, mapping.full_dims[0], np.asarray([full_px[0]]))
    ry = _inverse_axis(mapping.knots_y, mapping.full_dims[1], np.asarray([full_px[1]]))
    return float(rx[0]), float(ry[0])


@dataclass(frozen=True)
class FoveatedFrame:
    """Reduced-resolution RGBA payload plus the warp that produced it."""

    mapping: FoveaMapping
    eye: str
    frame_id: int
    pixels: np.ndarray  # (h, w, 4) uint8

    def __post_init__(self):
        w, h = self.mapping.reduced_dims
        pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if pixels.shape != (h, w, 4):
            raise ValueError(f"pixel buffer shape {pixels.shape} != {(h, w, 4)}")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        if self.eye not in EYE_CODES:
            raise ValueError(f"unknown eye {self.eye!r}")


def decode_frame(frame: FoveatedFrame) -> np.ndarray:
    """Reconstruct the full-resolution RGBA image (uint8, shape (H, W, 4))."""
    mapping = frame.mapping
    wf, hf = mapping.full_dims
    rx = _inverse_axis(mapping.knots_x, wf, np.arange(wf) + 0.5) - 0.5
    ry = _inverse_axis(mapping.knots_y, hf, np.arange(hf) + 0.5) - 0.5
    w, h = mapping.reduced_dims
    x0 = np.clip(np.floor(rx).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(ry).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(rx - x0, 0.0, 1.0)
    fy = np.clip(ry - y0, 0.0, 1.0)
    src = frame.pixels.astype(np.float64)
    top = src[y0][:, x0] * ((1 - fy)[:, None] * (1 - fx)[None, :])[..., None] + src[y0][
        :, x1
    ] * ((1 - fy)[:, None] * fx[None, :])[..., None]
    bottom = src[y1][:, x0] * (fy[:, None] * (1 - fx)[None, :])[..., None] + src[y1][
        :, x1
    ] * (fy[:, None] * fx[None, :])[..., None]
    out = top + bottom
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def pack_frame(frame: FoveatedFrame) -> bytes:
    mapping = frame.mapping
    header = _HEADER.pack(
        frame.frame_id,
        EYE_CODES[frame.eye],
        mapping.full_dims[0],
        mapping.full_dims[1],
        mapping.reduced_dims[0],
        mapping.reduced_dims[1],
        np.float32(mapping.gaze[0]),
        np.float32(mapping.gaze[1]),
        np.float32(mapping.fovea_radius),
        np.float32(mapping.reduction),
    )
    return header + frame.pixels.tobytes()


def unpack_frame(blob: bytes) -> FoveatedFrame:
    if len(blob) < _HEADER.size:
        raise ProtocolError("truncated", f"frame header needs {_HEADER.size} bytes")
    frame_id, eye_code, wf, hf, w, h, gx, gy, radius, reduction = _HEADER.unpack_from(blob)
    if eye_code not in EYE_NAMES:
        raise ProtocolError("bad-payload", f"unknown eye code {eye_code}")
    expected = _HEADER.size + 4 * w * h
    if len(blob) != expected:
        raise ProtocolError(
            "bad-payload", f"frame holds {len(blob)} bytes, header implies {expected}"
        )
    try:
        mapping = build_mapping((wf, hf), reduction, (gx, gy), radius)
    except (ValueError, CapacityError) as exc:
        raise ProtocolError("bad-payload", str(exc)) from exc
    if mapping.reduced_dims != (w, h):
        raise ProtocolError(
            "bad-payload",
            f"reduced dims {mapping.reduced_dims} never match header {(w, h)}",
        )
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size).reshape(h, w, 4)
    return FoveatedFrame(mapping, EYE_NAMES[eye_code], frame_id, pixels)
