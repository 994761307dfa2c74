import numpy as np
import pytest

from voxscope.errors import TopologyError
from voxscope.mesh import (
    SurfaceMesh,
    decimate_mesh,
    extract_mesh,
    laplacian_smooth,
    mesh_report,
    taubin_smooth,
)
from voxscope.phantom import Ellipsoid, generate_phantom

SPHERE_CENTER = np.array([32.0, 32.0, 32.0])


def _coarse_sphere(radius=6.0):
    vol = generate_phantom(
        (32, 32, 32), (1.0, 1.0, 1.0), [Ellipsoid((15.5, 15.5, 15.5), (radius,) * 3, 2, 3)]
    )
    return extract_mesh(vol, (2, 3))


def _radial_stats(mesh, center):
    r = np.linalg.norm(mesh.vertices - center, axis=1)
    return r.mean(), r.std()


def _flat_patch(n=9):
    xx, yy = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float))
    verts = np.stack([xx.ravel(), yy.ravel(), np.zeros(n * n)], axis=1)
    tris = []
    for j in range(n - 1):
        for i in range(n - 1):
            a = j * n + i
            tris.append([a, a + 1, a + n])
            tris.append([a + 1, a + n + 1, a + n])
    return SurfaceMesh(verts, np.asarray(tris))


def _non_manifold_mesh():
    # three triangles sharing one edge
    verts = np.array(
        [[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, -1, 0], [0.0, 0, 1]]
    )
    tris = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
    return SurfaceMesh(verts, tris)


def test_zero_iterations_is_identity(sphere_mesh):
    out = taubin_smooth(sphere_mesh, 0)
    assert out is sphere_mesh


def test_smoothing_moves_only_positions(sphere_mesh):
    out = taubin_smooth(sphere_mesh, 5)
    assert np.array_equal(out.triangles, sphere_mesh.triangles)
    assert not np.array_equal(out.vertices, sphere_mesh.vertices)


def test_noisy_sphere_denoises_without_shrinking(rng):
    from oracles import icosphere

    radius, center = 8.0, np.zeros(3)
    verts, tris = icosphere(radius, center)
    radial = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    noise = 0.02 * radius * rng.uniform(-1.0, 1.0, (verts.shape[0], 1))
    noisy = SurfaceMesh(verts + radial * noise, tris)
    smoothed = taubin_smooth(noisy, 50, 0.5, -0.53)

    def rms_deviation(mesh):
        r = np.linalg.norm(mesh.vertices - center, axis=1)
        return float(np.sqrt(((r - radius) ** 2).mean()))

    assert rms_deviation(noisy) / rms_deviation(smoothed) >= 5.0
    assert abs(smoothed.signed_volume() / noisy.signed_volume() - 1.0) <= 0.05


def test_taubin_beats_plain_laplacian_on_shrinkage():
    mesh = _coarse_sphere()
    v0 = mesh.signed_volume()
    taubin = taubin_smooth(mesh, 50, 0.5, -0.53)
    plain = laplacian_smooth(mesh, 50, 0.5)
    assert abs(taubin.signed_volume() / v0 - 1.0) < 0.05
    assert plain.signed_volume() / v0 < 0.85


def test_flat_patch_interior_stays_planar():
    patch = _flat_patch()
    out = taubin_smooth(patch, 10)
    assert np.abs(out.vertices[:, 2]).max() < 1e-9


def test_smoothing_parameter_preconditions(sphere_mesh):
    with pytest.raises(ValueError):
        taubin_smooth(sphere_mesh, 5, lambda_s=-0.1)
    with pytest.raises(ValueError):
        taubin_smooth(sphere_mesh, 5, lambda_s=0.5, mu_s=-0.4)


def test_smoothing_rejects_non_manifold():
    with pytest.raises(TopologyError):
        taubin_smooth(_non_manifold_mesh(), 5)


def test_decimate_noop_when_target_reached(sphere_mesh):
    out = decimate_mesh(sphere_mesh, sphere_mesh.triangles.shape[0] + 10)
    assert out is sphere_mesh


def test_decimate_sphere_keeps_topology_and_volume(sphere_mesh):
    target = 500
    out = decimate_mesh(sphere_mesh, target)
    assert out.triangles.shape[0] <= target
    report = mesh_report(out)
    assert report.is_closed_manifold
    assert report.euler_characteristic == 2
    assert report.components == 1
    v0 = sphere_mesh.signed_volume()
    assert abs(out.signed_volume() - v0) / v0 < 0.10


def test_decimate_keeps_disjoint_components():
    vol = generate_phantom(
        (48, 48, 48),
        (1.0, 1.0, 1.0),
        [
            Ellipsoid((12.0, 23.5, 23.5), (7.0, 7.0, 7.0), 2, 3),
            Ellipsoid((35.0, 23.5, 23.5), (7.0, 7.0, 7.0), 2, 3),
        ],
    )
    mesh = extract_mesh(vol, (2, 3))
    before = mesh_report(mesh)
    assert before.components == 2
    out = decimate_mesh(mesh, mesh.triangles.shape[0] // 10)
    report = mesh_report(out)
    assert report.components == 2
    assert report.euler_characteristic == 4
    assert report.is_closed_manifold


def test_decimate_hausdorff_stays_small(sphere_mesh):
    out = decimate_mesh(sphere_mesh, 500)
    # sampled symmetric vertex-to-surface bound via nearest original vertex
    from scipy.spatial import cKDTree

    tree = cKDTree(sphere_mesh.vertices)
    d1 = tree.query(out.vertices)[0].max()
    tree2 = cKDTree(out.vertices)
    d2 = tree2.query(sphere_mesh.vertices)[0].max()
    assert max(d1, d2) <= 2.0 * np.sqrt(3.0)  # two voxel diagonals at unit spacing


def test_decimate_rejects_bad_target(sphere_mesh):
    with pytest.raises(ValueError):
        decimate_mesh(sphere_mesh, 3)


def test_decimate_rejects_open_mesh():
    with pytest.raises(TopologyError):
        decimate_mesh(_flat_patch(), 10)
