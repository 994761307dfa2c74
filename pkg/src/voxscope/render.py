"""Mesh-guided volume ray marching.

Rays march a global t-grid (samples at (k + 1/2) * step) restricted to the
union of entry/exit intervals of the selected organ surfaces, so skipped
empty space never changes the accumulated color relative to marching the
whole ray with zero opacity outside the selection. Per-sample labels come
from the same six-tetrahedron interpolant whose level set produced the
meshes, which makes mesh membership and sample labeling agree exactly.

Clipping removes the camera-facing half-space by shrinking the march
intervals before any sampling happens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bvh import intersect_rays
from .errors import GeometryError
from .fovea import FoveatedFrame, FoveaMapping, build_mapping
from .mesh import SurfaceMesh, ray_mesh_intersections
from .scene import Camera, ClipPlane, ModelTransform, RenderSettings, SceneState
from .volume import LabeledVolume, SegmentationHierarchy, code_l1, code_l2

_CODE_SPACE = 1 << 15


@dataclass
class RenderStats:
    """Counters (and optional sample capture) filled during a render."""

    rays: int = 0
    samples: int = 0
    capture_points: bool = False
    points: list[np.ndarray] = field(default_factory=list)

    def captured(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 3))
        return np.concatenate(self.points)


class Renderer:
    """Immutable render assets: volume, per-label meshes, color table."""

    def __init__(
        self,
        volume: LabeledVolume,
        meshes: dict[tuple[int, int], SurfaceMesh],
        hierarchy: SegmentationHierarchy,
    ):
        self.volume = volume
        self.meshes = dict(meshes)
        self.hierarchy = hierarchy
        self._labels_flat = volume.labels.ravel()
        self._intensity_flat = volume.intensity.ravel()
        nx, ny, nz = volume.dims
        self._dims = np.array([nx, ny, nz], dtype=np.int64)
        self._spacing = np.asarray(volume.spacing)

        self._rgb_lut = np.zeros((_CODE_SPACE, 3))
        self._alpha_lut = np.zeros(_CODE_SPACE)
        codes = np.unique(volume.labels)
        for code in codes[codes != 0]:
            entry = hierarchy.lookup(int(code_l1(code)), int(code_l2(code)))
            color = entry.color if entry else (180, 180, 180, 160)
            self._rgb_lut[code] = np.asarray(color[:3]) / 255.0
            self._alpha_lut[code] = color[3] / 255.0

    # -- sampling ---------------------------------------------------------

    def _gather_codes(self, corners: np.ndarray) -> np.ndarray:
        """Label codes at integer lattice corners; out-of-grid is background."""
        nx, ny, nz = self._dims
        valid = np.all((corners >= 0) & (corners < self._dims[None, None, :]), axis=2)
        cx = np.clip(corners[..., 0], 0, nx - 1)
        cy = np.clip(corners[..., 1], 0, ny - 1)
        cz = np.clip(corners[..., 2], 0, nz - 1)
        flat = (cz * ny + cy) * nx + cx
        codes = self._labels_flat[flat]
        return np.where(valid, codes, 0).astype(np.int64)

    def sample_codes(self, pts_model: np.ndarray) -> np.ndarray:
        """Winning label code per model-space point via simplex interpolation.

        A point belongs to the label holding a strict majority (> 1/2) of
        the barycentric weight in its containing tetrahedron; this is
        exactly the interior predicate of the extracted label surface.
        """
        pts = np.asarray(pts_model, dtype=np.float64).reshape(-1, 3)
        g = pts / self._spacing[None, :] - 0.5
        base = np.floor(g).astype(np.int64)
        u = g - base
        order = np.argsort(-u, axis=1, kind="stable")
        us = np.take_along_axis(u, order, axis=1)
        weights = np.stack(
            [1.0 - us[:, 0], us[:, 0] - us[:, 1], us[:, 1] - us[:, 2], us[:, 2]], axis=1
        )
        eye = np.eye(3, dtype=np.int64)
        c0 = base
        c1 = base + eye[order[:, 0]]
        c2 = c1 + eye[order[:, 1]]
        c3 = base + 1
        corners = np.stack([c0, c1, c2, c3], axis=1)  # (N, 4, 3)
        labels = self._gather_codes(corners)  # (N, 4)

        best_mass = np.zeros(pts.shape[0])
        best_code = np.zeros(pts.shape[0], dtype=np.int64)
        for j in range(4):
            mass = np.zeros(pts.shape[0])
            for k in range(4):
                mass += weights[:, k] * (labels[:, k] == labels[:, j])
            better = mass > best_mass
            best_mass = np.where(better, mass, best_mass)
            best_code = np.where(better, labels[:, j], best_code)
        return np.where(best_mass > 0.5, best_code, 0)

    def sample_intensity(self, pts_model: np.ndarray) -> np.ndarray:
        """Nearest-voxel intensity, zero outside the grid."""
        pts = np.asarray(pts_model, dtype=np.float64).reshape(-1, 3)
        g = pts / self._spacing[None, :] - 0.5
        idx = np.rint(g).astype(np.int64)
        nx, ny, nz = self._dims
        valid = np.all((idx >= 0) & (idx < self._dims[None, :]), axis=1)
        cx = np.clip(idx[:, 0], 0, nx - 1)
        cy = np.clip(idx[:, 1], 0, ny - 1)
        cz = np.clip(idx[:, 2], 0, nz - 1)
        vals = self._intensity_flat[(cz * ny + cy) * nx + cx]
        return np.where(valid, vals, 0).astype(np.float64)

    def selection_lut(self, selection) -> np.ndarray:
        lut = np.zeros(_CODE_SPACE, dtype=bool)
        codes = np.unique(self.volume.labels)
        pairs = set(selection)
        for code in codes[codes != 0]:
            if (int(code_l1(code)), int(code_l2(code))) in pairs:
                lut[code] = True
        return lut

    # -- intervals --------------------------------------------------------

    def aabb_span(self, origin: np.ndarray, dirs: np.ndarray, transform: ModelTransform):
        """Per-ray [t_near, t_far] of the transformed volume box, clipped to t >= 0."""
        lo = transform.to_world(np.zeros(3))
        hi = transform.to_world(self._dims * self._spacing)
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (lo[None, :] - origin[None, :]) / dirs
            t1 = (hi[None, :] - origin[None, :]) / dirs
            tn = np.minimum(t0, t1)
            tf = np.maximum(t0, t1)
        tn = np.where(np.isnan(tn), -np.inf, tn)
        tf = np.where(np.isnan(tf), np.inf, tf)
        near = np.maximum(tn.max(axis=1), 0.0)
        far = tf.min(axis=1)
        return near, np.maximum(far, near)

    def _mesh_hits(self, mesh: SurfaceMesh, origin_w, dirs, transform: ModelTransform):
        origin_m = transform.to_model(origin_w)
        rid, t, front = intersect_rays(mesh.bvh(), origin_m, dirs)
        t = t * transform.scale
        keep = t >= 0.0
        return rid[keep], t[keep], front[keep]

    @staticmethod
    def _pair_hits(rid, t, front, far_by_ray):
        """Pair sorted alternating enter/exit hits into spans per ray."""
        if rid.shape[0] == 0:
            return (
                np.zeros(0, dtype=np.int64),
                np.zeros(0),
                np.zeros(0),
            )
        # dedupe duplicate crossings (edge shared by two triangles)
        quant = np.round(t / 1e-9).astype(np.int64)
        key = np.lexsort((front, quant, rid))
        rid, t, front, quant = rid[key], t[key], front[key], quant[key]
        dup = np.zeros(rid.shape[0], dtype=bool)
        dup[1:] = (
            (rid[1:] == rid[:-1]) & (quant[1:] == quant[:-1]) & (front[1:] == front[:-1])
        )
        rid, t, front = rid[~dup], t[~dup], front[~dup]

        first = np.ones(rid.shape[0], dtype=bool)
        first[1:] = rid[1:] != rid[:-1]
        last = np.ones(rid.shape[0], dtype=bool)
        last[:-1] = rid[1:] != rid[:-1]

        inside_start = first & ~front  # ray origin already inside the surface
        open_end = last & front  # unmatched trailing entry (numeric graze)
        starts_rid = np.concatenate([rid[front], rid[inside_start]])
        starts_t = np.concatenate([t[front], np.zeros(int(inside_start.sum()))])
        ends_rid = np.concatenate([rid[~front], rid[open_end]])
        ends_t = np.concatenate([t[~front], far_by_ray[rid[open_end]]])

        so = np.lexsort((starts_t, starts_rid))
        eo = np.lexsort((ends_t, ends_rid))
        starts_rid, starts_t = starts_rid[so], starts_t[so]
        ends_rid, ends_t = ends_rid[eo], ends_t[eo]

        n = far_by_ray.shape[0]
        cs = np.bincount(starts_rid, minlength=n)
        ce = np.bincount(ends_rid, minlength=n)
        if not np.array_equal(cs, ce):
            take = np.minimum(cs, ce)
            starts_keep = _first_k_in_groups(cs, take)
            ends_keep = _first_k_in_groups(ce, take)
            starts_rid, starts_t = starts_rid[starts_keep], starts_t[starts_keep]
            ends_rid, ends_t = ends_rid[ends_keep], ends_t[ends_keep]
        good = ends_t > starts_t
        return starts_rid[good], starts_t[good], ends_t[good]

    def mesh_spans(self, origin, dirs, selection, transform, far_by_ray):
        """(rid, t0, t1, code) spans for every selected label, unsorted."""
        out = []
        for pair in sorted(selection):
            mesh = self.meshes.get(pair)
            if mesh is None or mesh.is_empty:
                continue
            rid, t, front = self._mesh_hits(mesh, origin, dirs, transform)
            srid, st0, st1 = self._pair_hits(rid, t, front, far_by_ray)
            if srid.shape[0]:
                code = np.full(srid.shape[0], _pair_code(pair), dtype=np.int64)
                out.append((srid, st0, st1, code))
        if not out:
            z = np.zeros(0, dtype=np.int64)
            return z, np.zeros(0), np.zeros(0), z
        rid = np.concatenate([o[0] for o in out])
        t0 = np.concatenate([o[1] for o in out])
        t1 = np.concatenate([o[2] for o in out])
        code = np.concatenate([o[3] for o in out])
        return rid, t0, t1, code

    @staticmethod
    def clip_spans(rid, t0, t1, origin, dirs, clip: ClipPlane, camera_position):
        """Intersect spans with the kept half-space dot(p - point, n') <= 0."""
        if not clip.enabled or rid.shape[0] == 0:
            return rid, t0, t1, np.ones(rid.shape[0], dtype=bool)
        n = clip.oriented_normal(camera_position)
        c0 = float((origin - clip.point) @ n)
        den = dirs @ n
        den_r = den[rid]
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = -c0 / den_r
        new_t0 = np.where(den_r < 0.0, np.maximum(t0, tc), t0)
        new_t1 = np.where(den_r > 0.0, np.minimum(t1, tc), t1)
        parallel_out = (den_r == 0.0) & (c0 > 0.0)
        keep = (new_t1 > new_t0) & ~parallel_out
        return rid[keep], new_t0[keep], new_t1[keep], keep

    @staticmethod
    def union_spans(rid, t0, t1):
        """Merge overlapping spans per ray into disjoint sorted spans."""
        if rid.shape[0] == 0:
            return rid, t0, t1
        big = max(float(np.max(t1)), 1.0) * 4.0 + 10.0
        order = np.lexsort((t0, rid))
        rid, t0, t1 = rid[order], t0[order], t1[order]
        off = rid.astype(np.float64) * big
        a = t0 + off
        b = t1 + off
        run = np.maximum.accumulate(b)
        new = np.ones(a.shape[0], dtype=bool)
        new[1:] = a[1:] > run[:-1]
        starts = np.flatnonzero(new)
        ends_idx = np.r_[starts[1:], a.shape[0]]
        u_rid = rid[starts]
        u_t0 = t0[starts]
        u_t1 = np.maximum.reduceat(b, starts) - off[starts]
        del ends_idx
        return u_rid, u_t0, u_t1

    # -- marching ---------------------------------------------------------

    def march(
        self,
        origin: np.ndarray,
        dirs: np.ndarray,
        rid: np.ndarray,
        t0: np.ndarray,
        t1: np.ndarray,
        settings: RenderSettings,
        selection_lut: np.ndarray,
        transform: ModelTransform,
        stats: RenderStats | None = None,
    ):
        """Composite spans front-to-back on the global sample grid.

        Spans must be disjoint per ray. Returns (color (R, 3), alpha (R,)).
        """
        n_rays = dirs.shape[0]
        color = np.zeros((n_rays, 3))
        alpha = np.zeros(n_rays)
        if rid.shape[0] == 0:
            return color, alpha
        dt = settings.step_size
        k0 = np.ceil(t0 / dt - 0.5).astype(np.int64)
        k0 = np.maximum(k0, 0)
        k1 = np.floor(t1 / dt - 0.5).astype(np.int64)
        count = np.maximum(k1 - k0 + 1, 0)

        order = np.lexsort((t0, rid))
        rid, k0, count = rid[order], k0[order], count[order]
        first = np.ones(rid.shape[0], dtype=bool)
        first[1:] = rid[1:] != rid[:-1]
        slot = np.arange(rid.shape[0]) - np.maximum.accumulate(
            np.where(first, np.arange(rid.shape[0]), 0)
        )

        budget = np.full(n_rays, settings.max_steps, dtype=np.int64)
        et = settings.early_termination_alpha
        for s in range(int(slot.max()) + 1):
            sel = slot == s
            if not sel.any():
                continue
            s_rid = rid[sel]
            s_k0 = k0[sel]
            s_count = np.minimum(count[sel], budget[s_rid])
            live0 = s_count > 0
            s_rid, s_k0, s_count = s_rid[live0], s_k0[live0], s_count[live0]
            if s_rid.shape[0] == 0:
                continue
            max_n = int(s_count.max())
            for j in range(max_n):
                m = (j < s_count) & (alpha[s_rid] < et)
                if not m.any():
                    break
                r = s_rid[m]
                t = (s_k0[m] + j + 0.5) * dt
                pts_w = origin[None, :] + t[:, None] * dirs[r]
                pts_m = transform.to_model(pts_w)
                codes = self.sample_codes(pts_m)
                a = (
                    self._alpha_lut[codes]
                    * selection_lut[codes]
                    * (self.sample_intensity(pts_m) / 255.0)
                )
                col = self._rgb_lut[codes]
                trans = 1.0 - alpha[r]
                color[r] += (trans * a)[:, None] * col
                alpha[r] = alpha[r] + trans * a
                if stats is not None:
                    stats.samples += int(m.sum())
                    if stats.capture_points:
                        stats.points.append(pts_w)
            np.subtract.at(budget, s_rid, s_count)
        return color, alpha

    # -- frame-level API ---------------------------------------------------

    def _march_scene_rays(self, scene: SceneState, origin, dirs, stats=None):
        transform = scene.model_transform
        near, far = self.aabb_span(origin, dirs, transform)
        rid, t0, t1, _ = self.mesh_spans(origin, dirs, scene.selection, transform, far)
        rid, t0, t1, _ = self.clip_spans(
            rid, t0, t1, origin, dirs, scene.clip, scene.camera.position
        )
        rid, t0, t1 = self.union_spans(rid, t0, t1)
        lut = self.selection_lut(scene.selection)
        return self.march(
            origin, dirs, rid, t0, t1, scene.settings, lut, transform, stats
        )

    def render_rays(self, scene: SceneState, origin, dirs, stats=None) -> np.ndarray:
        """RGBA float image rows for arbitrary rays (already unit length)."""
        color, alpha = self._march_scene_rays(scene, origin, dirs, stats)
        bg = np.asarray(scene.settings.background)
        rgb = color + (1.0 - alpha)[:, None] * bg[None, :3] * bg[3]
        a = alpha + (1.0 - alpha) * bg[3]
        out = np.concatenate([rgb, a[:, None]], axis=1)
        if stats is not None:
            stats.rays += dirs.shape[0]
        return out

    def render_frame(self, scene: SceneState, eye: str = "mono", stats=None) -> np.ndarray:
        """Deterministic full-resolution RGBA8 image, shape (H, W, 4)."""
        cam = scene.camera
        w, h = cam.width, cam.height
        px = np.tile(np.arange(w, dtype=np.float64) + 0.5, h)
        py = np.repeat(np.arange(h, dtype=np.float64) + 0.5, w)
        origin, dirs = cam.rays_through(px, py, eye)
        rgba = self.render_rays(scene, origin, dirs, stats)
        img = np.clip(np.floor(rgba * 255.0 + 0.5), 0, 255).astype(np.uint8)
        return img.reshape(h, w, 4)

    def render_foveated(
        self,
        scene: SceneState,
        eye: str = "mono",
        frame_id: int = 0,
        mapping: FoveaMapping | None = None,
        stats=None,
    ) -> FoveatedFrame:
        """Render one ray per reduced pixel through its mapped full position."""
        cam = scene.camera
        if mapping is None:
            mapping = build_mapping(
                (cam.width, cam.height), scene.reduction, scene.gaze
            )
        w, h = mapping.reduced_dims
        px = np.tile(mapping.knots_x, h)
        py = np.repeat(mapping.knots_y, w)
        origin, dirs = cam.rays_through(px, py, eye)
        rgba = self.render_rays(scene, origin, dirs, stats)
        img = np.clip(np.floor(rgba * 255.0 + 0.5), 0, 255).astype(np.uint8)
        return FoveatedFrame(mapping, eye, frame_id, img.reshape(h, w, 4))

    # -- picking and inspection --------------------------------------------

    def ray_intervals_for_selection(self, scene: SceneState, origin, direction):
        """Per-label (t_enter, t_exit, (l1, l2)) list, sorted, t >= 0."""
        direction = np.asarray(direction, dtype=np.float64)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            raise GeometryError("ray direction must be non-zero")
        direction = direction / norm
        transform = scene.model_transform
        origin = np.asarray(origin, dtype=np.float64)
        origin_m = transform.to_model(origin)
        _, far = self.aabb_span(origin, direction[None, :], transform)
        intervals = []
        for pair in sorted(scene.selection):
            mesh = self.meshes.get(pair)
            if mesh is None or mesh.is_empty:
                continue
            hits = ray_mesh_intersections(mesh, origin_m, direction)
            spans = _pair_single_ray(hits, float(far[0] / transform.scale))
            for lo, hi in spans:
                intervals.append((lo * transform.scale, hi * transform.scale, pair))
        intervals.sort(key=lambda iv: (iv[0], iv[2]))
        return intervals

    def pick_organ(self, scene: SceneState, origin, direction):
        """(l1, l2, name) of the first selected organ hit, or None."""
        intervals = self.ray_intervals_for_selection(scene, origin, direction)
        if not intervals:
            return None
        direction = np.asarray(direction, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        origin = np.asarray(origin, dtype=np.float64)
        best = None
        for t0, t1, pair in intervals:
            rid = np.zeros(1, dtype=np.int64)
            _, c_t0, c_t1, _ = self.clip_spans(
                rid,
                np.asarray([t0]),
                np.asarray([t1]),
                origin,
                direction[None, :],
                scene.clip,
                scene.camera.position,
            )
            if c_t0.shape[0] == 0:
                continue
            key = (float(c_t0[0]), pair)
            if best is None or key < best:
                best = key
        if best is None:
            return None
        pair = best[1]
        return pair[0], pair[1], self.hierarchy.name_of(*pair)


def _pair_single_ray(hits, far: float):
    """Pair a single ray's sorted (t, entering) hits into (t0, t1) spans."""
    spans = []
    open_t = None
    for t, entering in hits:
        if entering:
            if open_t is None:
                open_t = t
        else:
            lo = 0.0 if open_t is None else open_t
            if t > lo:
                spans.append((lo, t))
            open_t = None
    if open_t is not None and far > open_t:
        spans.append((open_t, far))
    return spans


def _first_k_in_groups(counts: np.ndarray, take: np.ndarray) -> np.ndarray:
    """Boolean mask keeping the first take[g] items of each contiguous group."""
    total = int(counts.sum())
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(total) - np.repeat(starts, counts)
    return pos < np.repeat(take, counts)


def _pair_code(pair: tuple[int, int]) -> int:
    return (pair[0] << 11) | (pair[1] << 7)


def bioscope_transform(
    scene: SceneState,
    target: tuple[int, int],
    mesh: SurfaceMesh | None,
) -> SceneState | None:
    """Isolate ``target``, docking it on the camera axis at double scale.

    Returns None (no-op) when the target mesh is empty; raises ValueError
    when the target is not currently selected. The prior scene is stashed
    for restoration.
    """
    if target not in scene.selection:
        raise ValueError(f"bioscope target {target} is not selected")
    if mesh is None or mesh.is_empty:
        return None
    lo, hi = mesh.bounds()
    center_model = (lo + hi) / 2.0
    new_scale = scene.model_transform.scale * 2.0
    diag_world = float(np.linalg.norm(hi - lo)) * new_scale
    _, _, fwd = scene.camera.basis()
    dock = scene.camera.position + fwd * (1.5 * diag_world)
    translation = dock - center_model * new_scale
    return scene.with_(
        mode="bioscope",
        bioscope_target=target,
        selection=frozenset({target}),
        model_transform=ModelTransform(new_scale, translation),
        saved_state=scene,
    )


def exit_bioscope(scene: SceneState) -> SceneState:
    """Restore the scene stored when the bioscope was entered."""
    if scene.saved_state is not None:
        return scene.saved_state
    return scene.with_(mode="explore", bioscope_target=None, saved_state=None)


def composite_ray(
    renderer: Renderer,
    intervals,
    clip: ClipPlane,
    settings: RenderSettings,
    origin,
    direction,
    selection=None,
    transform: ModelTransform | None = None,
    camera_position=None,
    stats: RenderStats | None = None,
):
    """Front-to-back composite of one ray over the given (t0, t1, pair) list.

    Returns an RGBA float tuple (background already composited under).
    """
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise GeometryError("ray direction must be non-zero")
    direction = (direction / norm)[None, :]
    origin = np.asarray(origin, dtype=np.float64)
    transform = transform or ModelTransform()
    camera_position = origin if camera_position is None else np.asarray(camera_position)

    if selection is None:
        pairs = {iv[2] for iv in intervals if len(iv) > 2}
        selection = pairs if pairs else set(renderer.meshes)
    lut = renderer.selection_lut(selection)

    n = len(intervals)
    rid = np.zeros(n, dtype=np.int64)
    t0 = np.asarray([iv[0] for iv in intervals], dtype=np.float64)
    t1 = np.asarray([iv[1] for iv in intervals], dtype=np.float64)
    rid, t0, t1, _ = Renderer.clip_spans(rid, t0, t1, origin, direction, clip, camera_position)
    rid, t0, t1 = Renderer.union_spans(rid, t0, t1)
    color, alpha = renderer.march(
        origin, direction, rid, t0, t1, settings, lut, transform, stats
    )
    bg = np.asarray(settings.background)
    rgb = color[0] + (1.0 - alpha[0]) * bg[:3] * bg[3]
    a = alpha[0] + (1.0 - alpha[0]) * bg[3]
    return float(rgb[0]), float(rgb[1]), float(rgb[2]), float(a)
