"""Surface meshes extracted from label grids and their cleanup passes.

Extraction marches the six-tetrahedron (Kuhn) decomposition of each grid
cell over the binary indicator of one label, emitting the 0.5 level set of
the piecewise-linear interpolant. Every cube face is split along the same
diagonal in adjacent cells and 0.5 never equals a corner value, so the
result is always a closed, 2-manifold, consistently oriented surface.
Vertices sit at tetrahedron edge midpoints (optionally inset toward the
labeled side).

The same decomposition drives point-membership queries in the renderer,
which makes "inside the mesh" and "inside the interpolated label field"
the same predicate.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from heapq import heappop, heappush
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bvh import Bvh, build_bvh, intersect_ray
from .errors import GeometryError, TopologyError, VolumeFormatError
from .volume import LabeledVolume

MESH_MAGIC = b"MSH1"

# Kuhn decomposition: each permutation (a0, a1, a2) of the axes names the
# tetrahedron {base, base+e_a0, base+e_a0+e_a1, base+(1,1,1)}.
KUHN_PERMS: tuple[tuple[int, int, int], ...] = tuple(itertools.permutations((0, 1, 2)))


def _perm_corner_offsets(perm: tuple[int, int, int]) -> np.ndarray:
    offsets = np.zeros((4, 3), dtype=np.int64)
    offsets[1][perm[0]] = 1
    offsets[2][perm[0]] = 1
    offsets[2][perm[1]] = 1
    offsets[3][:] = 1
    return offsets


def _case_templates() -> dict[int, list[tuple[tuple[int, int], ...]]]:
    """Per inside-bitmask triangle recipes; each vertex is an (in, out) edge."""
    cases: dict[int, list[tuple[tuple[int, int], ...]]] = {}
    for bits in range(16):
        inside = [i for i in range(4) if bits >> i & 1]
        outside = [i for i in range(4) if not bits >> i & 1]
        tris: list[tuple[tuple[int, int], ...]] = []
        if len(inside) == 1:
            a = inside[0]
            x, y, z = outside
            tris = [((a, x), (a, y), (a, z))]
        elif len(inside) == 3:
            d = outside[0]
            x, y, z = inside
            tris = [((x, d), (y, d), (z, d))]
        elif len(inside) == 2:
            a, b = inside
            c, d = outside
            tris = [((a, c), (a, d), (b, d)), ((a, c), (b, d), (b, c))]
        cases[bits] = tris
    return cases


def _oriented_tables():
    """Fixed winding per (perm, case) so normals point inside -> outside."""
    raw = _case_templates()
    tables: list[list[list[tuple[tuple[int, int], ...]]]] = []
    for perm in KUHN_PERMS:
        offsets = _perm_corner_offsets(perm).astype(np.float64)
        per_case: list[list[tuple[tuple[int, int], ...]]] = []
        for bits in range(16):
            inside = [i for i in range(4) if bits >> i & 1]
            outside = [i for i in range(4) if not bits >> i & 1]
            oriented = []
            for tri in raw[bits]:
                pts = np.array([(offsets[e[0]] + offsets[e[1]]) / 2.0 for e in tri])
                normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
                towards_out = offsets[outside].mean(axis=0) - offsets[inside].mean(axis=0)
                if float(normal @ towards_out) < 0.0:
                    tri = (tri[0], tri[2], tri[1])
                oriented.append(tri)
            per_case.append(oriented)
        tables.append(per_case)
    return tables


_ORIENTED = _oriented_tables()


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Indexed triangle mesh in world millimeters, tagged with its label."""

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    label: tuple[int, int] = (0, 0)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise TopologyError("triangle index out of range")
        if tris.size and (
            (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
        ).any():
            raise TopologyError("degenerate triangle with repeated vertices")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "label", (int(self.label[0]), int(self.label[1])))
        object.__setattr__(self, "_bvh", None)

    @property
    def is_empty(self) -> bool:
        return self.triangles.shape[0] == 0

    def bvh(self) -> Bvh:
        cached = getattr(self, "_bvh")
        if cached is None:
            cached = build_bvh(self.vertices, self.triangles)
            object.__setattr__(self, "_bvh", cached)
        return cached

    def bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.is_empty:
            return None
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def signed_volume(self) -> float:
        if self.is_empty:
            return 0.0
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def extract_mesh(
    volume: LabeledVolume,
    label: tuple[int, int],
    iso_inset: float = 0.0,
) -> SurfaceMesh:
    """Closed outward-oriented surface of one (l1, l2) label region.

    An absent label yields an empty mesh. ``iso_inset`` pulls crossings
    toward the labeled voxel centers (fraction of an edge, |inset| < 0.3).
    """
    if not -0.3 <= iso_inset <= 0.3:
        raise ValueError(f"iso_inset outside [-0.3, 0.3]: {iso_inset}")
    mask = volume.pair_mask(*label)
    if not mask.any():
        return SurfaceMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), label)

    nz, ny, nx = mask.shape
    ind = np.zeros((nz + 2, ny + 2, nx + 2), dtype=bool)
    ind[1:-1, 1:-1, 1:-1] = mask

    corner = {}
    for dz in (0, 1):
        for dy in (0, 1):
            for dx in (0, 1):
                corner[(dx, dy, dz)] = ind[
                    dz : dz + nz + 1, dy : dy + ny + 1, dx : dx + nx + 1
                ]
    total = np.zeros((nz + 1, ny + 1, nx + 1), dtype=np.int8)
    for grid in corner.values():
        total += grid
    bz, by, bx = np.nonzero((total > 0) & (total < 8))
    base = np.stack([bx, by, bz], axis=1)  # (M, 3) in (x, y, z) padded lattice coords

    # flat ids for vertex dedup: one id per lattice point
    pnx, pny, pnz = nx + 2, ny + 2, nz + 2

    def flat_id(pts: np.ndarray) -> np.ndarray:
        return (pts[:, 2] * pny + pts[:, 1]) * pnx + pts[:, 0]

    def values_at(pts: np.ndarray) -> np.ndarray:
        return ind[pts[:, 2], pts[:, 1], pts[:, 0]]

    edge_in: list[np.ndarray] = []  # lattice ids of inside endpoints, (K, 3) per chunk
    edge_out: list[np.ndarray] = []

    for perm_idx, perm in enumerate(KUHN_PERMS):
        offsets = _perm_corner_offsets(perm)
        corner_pts = [base + offsets[i][None, :] for i in range(4)]
        f = [values_at(p) for p in corner_pts]
        bits = (
            f[0].astype(np.int8)
            | (f[1].astype(np.int8) << 1)
            | (f[2].astype(np.int8) << 2)
            | (f[3].astype(np.int8) << 3)
        )
        for case in range(1, 15):
            rows = np.flatnonzero(bits == case)
            if rows.shape[0] == 0:
                continue
            for tri in _ORIENTED[perm_idx][case]:
                # triangle-major layout: the 3 vertices of a cell's triangle stay adjacent
                tin = np.stack([corner_pts[e[0]][rows] for e in tri], axis=1)
                tout = np.stack([corner_pts[e[1]][rows] for e in tri], axis=1)
                edge_in.append(tin.reshape(-1, 3))
                edge_out.append(tout.reshape(-1, 3))

    pin = np.concatenate(edge_in)
    pout = np.concatenate(edge_out)
    keys = flat_id(pin).astype(np.int64) * (pnx * pny * pnz) + flat_id(pout)
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    first = np.zeros(unique_keys.shape[0], dtype=np.int64)
    first[inverse] = np.arange(keys.shape[0])
    t = 0.5 - iso_inset
    lattice = pin[first] + t * (pout[first] - pin[first])
    spacing = np.asarray(volume.spacing)
    vertices = (lattice - 0.5) * spacing[None, :]
    triangles = inverse.reshape(-1, 3)
    return SurfaceMesh(vertices, triangles, label)


def extract_all_meshes(volume: LabeledVolume, iso_inset: float = 0.0):
    return {pair: extract_mesh(volume, pair, iso_inset) for pair in volume.label_pairs()}


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class MeshReport:
    closed: bool
    oriented: bool
    vertex_manifold: bool
    components: int
    euler_characteristic: int

    @property
    def is_closed_manifold(self) -> bool:
        return self.closed and self.oriented and self.vertex_manifold


def mesh_report(mesh: SurfaceMesh) -> MeshReport:
    """Full topology audit: edge use, orientation coherence, vertex links."""
    tris = mesh.triangles
    if tris.shape[0] == 0:
        return MeshReport(True, True, True, 0, 0)
    directed: dict[tuple[int, int], int] = {}
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v))
            directed[key] = directed.get(key, 0) + 1
    closed = True
    oriented = True
    for (u, v), count in directed.items():
        if count != 1:
            oriented = False
        if directed.get((v, u), 0) != count:
            closed = False

    used = np.unique(tris)
    n_edges = len({(min(u, v), max(u, v)) for u, v in directed})
    euler = int(len(used) - n_edges + tris.shape[0])

    # vertex links must each be a single cycle
    around: dict[int, list[tuple[int, int]]] = {}
    for a, b, c in tris:
        around.setdefault(int(a), []).append((int(b), int(c)))
        around.setdefault(int(b), []).append((int(c), int(a)))
        around.setdefault(int(c), []).append((int(a), int(b)))
    vertex_manifold = True
    for _, wedges in around.items():
        nxt = dict(wedges)
        if len(nxt) != len(wedges):
            vertex_manifold = False
            continue
        start = wedges[0][0]
        seen = 1
        cur = nxt.get(start)
        while cur is not None and cur != start and seen <= len(wedges):
            seen += 1
            cur = nxt.get(cur)
        if cur != start or seen != len(wedges):
            vertex_manifold = False

    # connected components over used vertices
    parent = {int(v): int(v) for v in used}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, c in tris:
        ra, rb, rc = find(int(a)), find(int(b)), find(int(c))
        parent[rb] = ra
        parent[find(int(c))] = find(int(a))
    components = len({find(int(v)) for v in used})
    return MeshReport(closed, oriented, vertex_manifold, components, euler)


def _edge_face_counts(tris: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(min(u, v)), int(max(u, v)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def _require_edge_manifold(mesh: SurfaceMesh, closed: bool = False) -> None:
    counts = _edge_face_counts(mesh.triangles)
    for edge, count in counts.items():
        if count > 2 or (closed and count != 2):
            raise TopologyError(f"edge {edge} borders {count} triangles")


# ---------------------------------------------------------------------------
# smoothing


def _uniform_adjacency(n_vertices: int, tris: np.ndarray) -> sp.csr_matrix:
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0])
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n_vertices, n_vertices))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    deg[deg == 0] = 1.0
    inv = sp.diags(1.0 / deg)
    return inv @ adj


def taubin_smooth(
    mesh: SurfaceMesh,
    iterations: int = 20,
    lambda_s: float = 0.5,
    mu_s: float = -0.53,
) -> SurfaceMesh:
    """Two-phase umbrella smoothing with shrink compensation.

    Each iteration applies an expansion-compensated pair of Laplacian
    steps: positions move by ``lambda_s`` toward the neighbor average,
    then by ``mu_s`` (negative, slightly larger in magnitude) away.
    Connectivity is untouched.
    """
    if lambda_s <= 0.0:
        raise ValueError(f"lambda_s must be positive, got {lambda_s}")
    if mu_s >= -lambda_s:
        raise ValueError(f"mu_s must be < -lambda_s, got {mu_s}")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0 or mesh.is_empty:
        return mesh
    _require_edge_manifold(mesh)
    avg = _uniform_adjacency(mesh.vertices.shape[0], mesh.triangles)
    x = mesh.vertices.copy()
    for _ in range(iterations):
        x = x + lambda_s * (avg @ x - x)
        x = x + mu_s * (avg @ x - x)
    return SurfaceMesh(x, mesh.triangles, mesh.label)


def laplacian_smooth(mesh: SurfaceMesh, iterations: int, lambda_s: float = 0.5) -> SurfaceMesh:
    """Plain umbrella smoothing (shrinks); kept as a contrast baseline."""
    if iterations == 0 or mesh.is_empty:
        return mesh
    _require_edge_manifold(mesh)
    avg = _uniform_adjacency(mesh.vertices.shape[0], mesh.triangles)
    x = mesh.vertices.copy()
    for _ in range(iterations):
        x = x + lambda_s * (avg @ x - x)
    return SurfaceMesh(x, mesh.triangles, mesh.label)


# ---------------------------------------------------------------------------
# decimation


def _cross3(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # np.cross has large per-call overhead for single 3-vectors
    return np.array(
        (
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        )
    )


def decimate_mesh(mesh: SurfaceMesh, target_triangles: int) -> SurfaceMesh:
    """Greedy quadric edge collapse down to ``target_triangles``.

    Collapses are rejected unless they keep the surface a closed 2-manifold
    (link condition) and do not flip or degenerate any surviving triangle,
    so the triangle count stops early if the target is unreachable.
    """
    if target_triangles < 4:
        raise ValueError(f"target must be >= 4 triangles, got {target_triangles}")
    if mesh.is_empty or mesh.triangles.shape[0] <= target_triangles:
        return mesh
    _require_edge_manifold(mesh, closed=True)

    verts = mesh.vertices.copy()
    faces = [tuple(int(i) for i in tri) for tri in mesh.triangles]
    face_alive = [True] * len(faces)
    vertex_faces: dict[int, set[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for v in (a, b, c):
            vertex_faces.setdefault(v, set()).add(fi)

    quadrics = np.zeros((verts.shape[0], 4, 4))
    for a, b, c in faces:
        n = _cross3(verts[b] - verts[a], verts[c] - verts[a])
        area = float(np.sqrt(n @ n))
        if area < 1e-30:
            continue
        n = n / area
        plane = np.array([n[0], n[1], n[2], -float(n @ verts[a])])
        k = np.outer(plane, plane) * (area / 2.0)
        for v in (a, b, c):
            quadrics[v] += k

    stamp = np.zeros(verts.shape[0], dtype=np.int64)
    alive_count = len(faces)
    heap: list = []
    counter = 0

    def neighbors(v: int) -> set[int]:
        out: set[int] = set()
        for fi in vertex_faces.get(v, ()):
            if face_alive[fi]:
                out.update(faces[fi])
        out.discard(v)
        return out

    def collapse_cost(a: int, b: int):
        q = quadrics[a] + quadrics[b]
        sys_a = q[:3, :3]
        rhs = -q[:3, 3]
        candidates = []
        det = float(np.linalg.det(sys_a))
        if abs(det) > 1e-10 * (abs(np.trace(sys_a)) / 3.0 + 1e-30) ** 3:
            try:
                candidates.append(np.linalg.solve(sys_a, rhs))
            except np.linalg.LinAlgError:
                pass
        candidates.extend(((verts[a] + verts[b]) / 2.0, verts[a].copy(), verts[b].copy()))
        qb = q[:3, 3]
        qc = q[3, 3]
        best_pos, best_err = None, np.inf
        for pos in candidates:
            err = float(pos @ sys_a @ pos + 2.0 * (qb @ pos) + qc)
            if err < best_err:
                best_err, best_pos = err, pos
        return best_err, best_pos

    def push_edge(a: int, b: int):
        nonlocal counter
        if a > b:
            a, b = b, a
        err, pos = collapse_cost(a, b)
        counter += 1
        heappush(heap, (err, counter, a, b, int(stamp[a]), int(stamp[b]), pos))

    pushed = set()
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            if key not in pushed:
                pushed.add(key)
                push_edge(*key)

    def shared_face_thirds(a: int, b: int) -> list[int]:
        thirds = []
        for fi in vertex_faces.get(a, set()) & vertex_faces.get(b, set()):
            if face_alive[fi]:
                thirds.extend(v for v in faces[fi] if v not in (a, b))
        return thirds

    def collapse_ok(a: int, b: int, pos: np.ndarray) -> bool:
        thirds = shared_face_thirds(a, b)
        if len(thirds) != 2:
            return False
        if set(thirds) != neighbors(a) & neighbors(b):
            return False  # link condition
        for v, other in ((a, b), (b, a)):
            for fi in vertex_faces.get(v, ()):
                if not face_alive[fi] or other in faces[fi]:
                    continue
                tri = faces[fi]
                old = [verts[i] for i in tri]
                new = [pos if i == v else verts[i] for i in tri]
                old_n = _cross3(old[1] - old[0], old[2] - old[0])
                new_n = _cross3(new[1] - new[0], new[2] - new[0])
                if float(new_n @ new_n) < 1e-28 or float(old_n @ new_n) <= 0.0:
                    return False
        return True

    while alive_count > target_triangles and heap:
        err, _, a, b, sa, sb, pos = heappop(heap)
        if stamp[a] != sa or stamp[b] != sb:
            continue
        if b not in neighbors(a):
            continue
        if not collapse_ok(a, b, pos):
            continue
        verts[a] = pos
        quadrics[a] = quadrics[a] + quadrics[b]
        dead = [fi for fi in vertex_faces[a] & vertex_faces[b] if face_alive[fi]]
        for fi in dead:
            face_alive[fi] = False
            alive_count -= 1
            for v in faces[fi]:
                vertex_faces[v].discard(fi)
        for fi in list(vertex_faces.get(b, ())):
            if not face_alive[fi]:
                vertex_faces[b].discard(fi)
                continue
            faces[fi] = tuple(a if v == b else v for v in faces[fi])
            vertex_faces[a].add(fi)
            vertex_faces[b].discard(fi)
        stamp[a] += 1
        stamp[b] += 1
        for n in neighbors(a):
            push_edge(a, n)

    keep = [fi for fi, alive in enumerate(face_alive) if alive]
    used = sorted({v for fi in keep for v in faces[fi]})
    remap = {v: i for i, v in enumerate(used)}
    new_tris = np.array([[remap[v] for v in faces[fi]] for fi in keep], dtype=np.int64)
    return SurfaceMesh(verts[used], new_tris, mesh.label)


# ---------------------------------------------------------------------------
# ray queries


def ray_mesh_intersections(
    mesh: SurfaceMesh, origin, direction
) -> list[tuple[float, bool]]:
    """Sorted (t, entering) hits with t >= 0; duplicate edge hits merged."""
    direction = np.asarray(direction, dtype=np.float64)
    if np.linalg.norm(direction) == 0.0:
        raise GeometryError("ray direction must be non-zero")
    if mesh.is_empty:
        return []
    t, front, _ = intersect_ray(mesh.bvh(), np.asarray(origin, dtype=np.float64), direction)
    hits: list[tuple[float, bool]] = []
    for ti, fi in zip(t, front):
        if ti < 0.0:
            continue
        if hits and abs(hits[-1][0] - ti) < 1e-9 and hits[-1][1] == bool(fi):
            continue  # same crossing seen via two triangles sharing an edge
        hits.append((float(ti), bool(fi)))
    return hits


# ---------------------------------------------------------------------------
# on-disk cache: MSH1 container, one file per label


def save_mesh(mesh: SurfaceMesh, path: str | Path) -> None:
    nv = mesh.vertices.shape[0]
    nt = mesh.triangles.shape[0]
    header = MESH_MAGIC + struct.pack("<BBII", mesh.label[0], mesh.label[1], nv, nt)
    body = (
        mesh.vertices.astype("<f4").tobytes()
        + mesh.triangles.astype("<u4").tobytes()
    )
    Path(path).write_bytes(header + body)


def load_mesh(path: str | Path) -> SurfaceMesh:
    blob = Path(path).read_bytes()
    if len(blob) < 14 or blob[:4] != MESH_MAGIC:
        raise VolumeFormatError(f"{path}: not a mesh cache file")
    l1, l2, nv, nt = struct.unpack("<BBII", blob[4:14])
    need = 14 + nv * 12 + nt * 12
    if len(blob) != need:
        raise VolumeFormatError(f"{path}: expected {need} bytes, found {len(blob)}")
    verts = np.frombuffer(blob, dtype="<f4", count=nv * 3, offset=14).reshape(nv, 3)
    tris = np.frombuffer(blob, dtype="<u4", count=nt * 3, offset=14 + nv * 12)
    return SurfaceMesh(verts.astype(np.float64), tris.astype(np.int64).reshape(nt, 3), (l1, l2))


def mesh_cache_name(l1: int, l2: int) -> str:
    return f"mesh_{l1:02d}_{l2:02d}.msh1"
