"""Axis-aligned bounding-volume hierarchy over triangles.

Built once per mesh (median split on the longest axis, small leaves) and
traversed either one ray at a time or for a whole ray batch at once. The
batched traversal carries an index array of live rays down the tree so
that image-sized ray sets stay in numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

_LEAF_SIZE = 8
_EPS = 1e-12


@dataclass
class Bvh:
    node_min: np.ndarray  # (n_nodes, 3)
    node_max: np.ndarray
    node_child: np.ndarray  # (n_nodes, 2); (-1, -1) marks a leaf
    node_range: np.ndarray  # (n_nodes, 2) [start, end) into tri_order for leaves
    tri_order: np.ndarray  # permutation of triangle ids
    va: np.ndarray  # (T, 3) triangle vertices in tri_order
    e1: np.ndarray  # b - a
    e2: np.ndarray  # c - a


def build_bvh(vertices: np.ndarray, triangles: np.ndarray) -> Bvh:
    tris = np.asarray(triangles, dtype=np.int64)
    verts = np.asarray(vertices, dtype=np.float64)
    n = tris.shape[0]
    if n == 0:
        empty3 = np.zeros((1, 3))
        return Bvh(
            node_min=empty3,
            node_max=empty3,
            node_child=np.full((1, 2), -1, dtype=np.int64),
            node_range=np.zeros((1, 2), dtype=np.int64),
            tri_order=np.zeros(0, dtype=np.int64),
            va=np.zeros((0, 3)),
            e1=np.zeros((0, 3)),
            e2=np.zeros((0, 3)),
        )

    corners = verts[tris]  # (T, 3, 3)
    tri_min = corners.min(axis=1)
    tri_max = corners.max(axis=1)
    centroid = corners.mean(axis=1)

    order = np.arange(n)
    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_child: list[tuple[int, int]] = []
    node_range: list[tuple[int, int]] = []

    def new_node(lo: int, hi: int) -> int:
        idx = order[lo:hi]
        node_min.append(tri_min[idx].min(axis=0))
        node_max.append(tri_max[idx].max(axis=0))
        node_child.append((-1, -1))
        node_range.append((lo, hi))
        return len(node_min) - 1

    root = new_node(0, n)
    stack = [root]
    while stack:
        node = stack.pop()
        lo, hi = node_range[node]
        if hi - lo <= _LEAF_SIZE:
            continue
        idx = order[lo:hi]
        extent = tri_max[idx].max(axis=0) - tri_min[idx].min(axis=0)
        axis = int(np.argmax(extent))
        local = np.argsort(centroid[idx, axis], kind="stable")
        order[lo:hi] = idx[local]
        mid = lo + (hi - lo) // 2
        left = new_node(lo, mid)
        right = new_node(mid, hi)
        node_child[node] = (left, right)
        stack.extend((left, right))

    a = corners[order, 0]
    b = corners[order, 1]
    c = corners[order, 2]
    return Bvh(
        node_min=np.asarray(node_min),
        node_max=np.asarray(node_max),
        node_child=np.asarray(node_child, dtype=np.int64),
        node_range=np.asarray(node_range, dtype=np.int64),
        tri_order=order,
        va=a,
        e1=b - a,
        e2=c - a,
    )


def _ray_box(origin, inv_dir, bmin, bmax):
    # 0 * inf produces nan exactly when the origin sits on a slab plane of a
    # parallel axis; that axis then imposes no constraint.
    with np.errstate(invalid="ignore"):
        t0 = (bmin - origin) * inv_dir
        t1 = (bmax - origin) * inv_dir
        tn = np.minimum(t0, t1)
        tf = np.maximum(t0, t1)
    tn = np.where(np.isnan(tn), -np.inf, tn)
    tf = np.where(np.isnan(tf), np.inf, tf)
    return tn.max(axis=-1), tf.min(axis=-1)


def intersect_ray(bvh: Bvh, origin: np.ndarray, direction: np.ndarray):
    """All triangle hits of one ray: arrays (t, front_facing, tri_index)."""
    direction = np.asarray(direction, dtype=np.float64)
    if np.linalg.norm(direction) == 0.0:
        raise GeometryError("ray direction must be non-zero")
    origin = np.asarray(origin, dtype=np.float64)
    hits_t: list[float] = []
    hits_front: list[bool] = []
    hits_tri: list[int] = []
    if bvh.tri_order.shape[0] == 0:
        return np.zeros(0), np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64)

    with np.errstate(divide="ignore"):
        inv = 1.0 / direction
    stack = [0]
    while stack:
        node = stack.pop()
        near, far = _ray_box(origin, inv, bvh.node_min[node], bvh.node_max[node])
        if far < max(near, 0.0) - _EPS:
            continue
        left, right = bvh.node_child[node]
        if left >= 0:
            stack.extend((int(left), int(right)))
            continue
        lo, hi = bvh.node_range[node]
        t, front, ok = _moller_trumbore(
            origin, direction, bvh.va[lo:hi], bvh.e1[lo:hi], bvh.e2[lo:hi]
        )
        for k in np.flatnonzero(ok):
            hits_t.append(float(t[k]))
            hits_front.append(bool(front[k]))
            hits_tri.append(int(bvh.tri_order[lo + k]))
    t = np.asarray(hits_t)
    order = np.argsort(t, kind="stable")
    return (
        t[order],
        np.asarray(hits_front, dtype=bool)[order],
        np.asarray(hits_tri, dtype=np.int64)[order],
    )


def _moller_trumbore(origin, direction, va, e1, e2):
    pvec = np.cross(np.broadcast_to(direction, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > _EPS
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - va
    u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    v = np.broadcast_to(direction, qvec.shape)
    v = np.einsum("ij,ij->i", v, qvec) * inv_det
    t = np.einsum("ij,ij->i", e2, qvec) * inv_det
    ok &= (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0)
    front = det > 0.0  # counter-clockwise winding faces the ray origin
    return t, front, ok


def intersect_rays(bvh: Bvh, origin: np.ndarray, dirs: np.ndarray):
    """Batched traversal for many rays sharing one origin.

    Returns (ray_id, t, front_facing) flat arrays, unsorted.
    """
    n_rays = dirs.shape[0]
    out_ray: list[np.ndarray] = []
    out_t: list[np.ndarray] = []
    out_front: list[np.ndarray] = []
    if bvh.tri_order.shape[0] == 0 or n_rays == 0:
        return (
            np.zeros(0, dtype=np.int64),
            np.zeros(0),
            np.zeros(0, dtype=bool),
        )
    with np.errstate(divide="ignore"):
        inv = 1.0 / dirs  # +/-inf on zero components is intended

    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n_rays))]
    while stack:
        node, rays = stack.pop()
        near, far = _ray_box(origin[None, :], inv[rays], bvh.node_min[node], bvh.node_max[node])
        live = rays[far >= np.maximum(near, 0.0) - _EPS]
        if live.shape[0] == 0:
            continue
        left, right = bvh.node_child[node]
        if left >= 0:
            stack.append((int(left), live))
            stack.append((int(right), live))
            continue
        lo, hi = bvh.node_range[node]
        for k in range(lo, hi):
            t, front, ok = _tri_vs_rays(origin, dirs[live], bvh.va[k], bvh.e1[k], bvh.e2[k])
            hit = np.flatnonzero(ok)
            if hit.shape[0]:
                out_ray.append(live[hit])
                out_t.append(t[hit])
                out_front.append(front[hit])
    if not out_ray:
        return (
            np.zeros(0, dtype=np.int64),
            np.zeros(0),
            np.zeros(0, dtype=bool),
        )
    return np.concatenate(out_ray), np.concatenate(out_t), np.concatenate(out_front)


def _tri_vs_rays(origin, dirs, va, e1, e2):
    pvec = np.cross(dirs, e2[None, :])
    det = pvec @ e1
    ok = np.abs(det) > _EPS
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - va
    u = (pvec @ tvec) * inv_det
    qvec = np.cross(tvec, e1)
    v = (dirs @ qvec) * inv_det
    t = (e2 @ qvec) * inv_det
    ok &= (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0)
    return t, det > 0.0, ok
