"""Independent brute-force oracles used to freeze expected test values.

Everything here is deliberately slow and simple, and stays decoupled from
the library implementations it cross-checks.
"""

from __future__ import annotations

import numpy as np


def pack_code(l1: int, l2: int, l3: int) -> int:
    """Reference bit packing."""
    return (l1 << 11) | (l2 << 7) | l3


def nearest_labeled_slice(z: int, labeled: list[int]) -> int:
    """Nearest labeled z-index; ties go to the lower index."""
    best = labeled[0]
    for cand in labeled[1:]:
        if abs(cand - z) < abs(best - z):
            best = cand
    return best


def brute_signed_distance(mask: np.ndarray) -> np.ndarray:
    """All-pairs signed distance with the half-pixel boundary convention."""
    mask = mask.astype(bool)
    ny, nx = mask.shape
    sentinel = float(np.hypot(nx, ny))
    ys, xs = np.nonzero(mask)
    inside = np.stack([ys, xs], axis=1)
    ys, xs = np.nonzero(~mask)
    outside = np.stack([ys, xs], axis=1)
    out = np.empty((ny, nx))
    for y in range(ny):
        for x in range(nx):
            if mask[y, x]:
                if len(outside) == 0:
                    out[y, x] = -sentinel
                else:
                    d = np.sqrt(((outside - (y, x)) ** 2).sum(axis=1)).min()
                    out[y, x] = -(d - 0.5)
            else:
                if len(inside) == 0:
                    out[y, x] = sentinel
                else:
                    d = np.sqrt(((inside - (y, x)) ** 2).sum(axis=1)).min()
                    out[y, x] = d - 0.5
    return out


def ellipsoid_voxel_volume(radii: tuple[float, float, float]) -> float:
    rx, ry, rz = radii
    return 4.0 / 3.0 * np.pi * rx * ry * rz


def central_difference(fn, lam: float, h: float = 1e-6) -> float:
    return (fn(lam + h) - fn(lam - h)) / (2.0 * h)


def dice_score(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(bool)
    b = b.astype(bool)
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.logical_and(a, b).sum() / denom


def icosphere(radius: float, center: np.ndarray, subdivisions: int = 3):
    """Analytically smooth sphere mesh (subdivided icosahedron)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=float,
    )
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        new_tris = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new_tris
    vertices = np.asarray(verts) * radius + center
    return vertices, np.asarray(tris, dtype=np.int64)


def mesh_signed_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    """Signed volume via the divergence theorem (positive for outward winding)."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def point_in_mesh(point: np.ndarray, vertices: np.ndarray, triangles: np.ndarray) -> bool:
    """Ray-parity containment test against every triangle (no acceleration)."""
    direction = np.array([0.577350269189626, 0.577350269189657, 0.57735026918957])
    count = 0
    for tri in triangles:
        a, b, c = vertices[tri]
        if _ray_hits_triangle(point, direction, a, b, c) is not None:
            count += 1
    return count % 2 == 1


def _ray_hits_triangle(origin, direction, a, b, c, eps=1e-12):
    e1 = b - a
    e2 = c - a
    pvec = np.cross(direction, e2)
    det = e1 @ pvec
    if abs(det) < eps:
        return None
    inv = 1.0 / det
    tvec = origin - a
    u = (tvec @ pvec) * inv
    if u < 0.0 or u > 1.0:
        return None
    qvec = np.cross(tvec, e1)
    v = (direction @ qvec) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = (e2 @ qvec) * inv
    if t <= 0.0:
        return None
    return t
