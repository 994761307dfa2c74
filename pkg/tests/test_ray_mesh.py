import numpy as np
import pytest

from voxscope.errors import GeometryError
from voxscope.mesh import extract_mesh, ray_mesh_intersections
from voxscope.phantom import Ellipsoid, generate_phantom

CENTER = np.array([32.0, 32.0, 32.0])


def test_center_ray_two_hits_with_radius_gap(sphere_mesh):
    hits = ray_mesh_intersections(sphere_mesh, np.array([0.0, 32.0, 32.0]), np.array([1.0, 0.0, 0.0]))
    assert len(hits) == 2
    assert hits[0][1] is True and hits[1][1] is False
    gap = hits[1][0] - hits[0][0]
    assert abs(gap - 20.0) <= 1.0 + 1e-9


def test_miss_returns_empty(sphere_mesh):
    hits = ray_mesh_intersections(sphere_mesh, np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    assert hits == []


def test_two_sphere_ray_alternates():
    vol = generate_phantom(
        (64, 64, 64),
        (1.0, 1.0, 1.0),
        [
            Ellipsoid((14.0, 31.5, 31.5), (7.0, 7.0, 7.0), 2, 3),
            Ellipsoid((46.0, 31.5, 31.5), (7.0, 7.0, 7.0), 2, 3),
        ],
    )
    mesh = extract_mesh(vol, (2, 3))
    hits = ray_mesh_intersections(mesh, np.array([-5.0, 32.0, 32.0]), np.array([1.0, 0.0, 0.0]))
    assert len(hits) == 4
    assert [h[1] for h in hits] == [True, False, True, False]


def test_origin_inside_starts_with_exit(sphere_mesh):
    hits = ray_mesh_intersections(sphere_mesh, CENTER, np.array([0.0, 0.0, 1.0]))
    assert len(hits) == 1
    assert hits[0][1] is False
    assert abs(hits[0][0] - 10.0) <= 1.0


def test_hits_sorted_and_non_negative(sphere_mesh, rng):
    for _ in range(25):
        origin = rng.uniform(-10.0, 74.0, 3)
        direction = rng.normal(size=3)
        hits = ray_mesh_intersections(sphere_mesh, origin, direction)
        ts = [t for t, _ in hits]
        assert ts == sorted(ts)
        assert all(t >= 0.0 for t in ts)


def test_parity_even_from_outside(sphere_mesh, rng):
    for _ in range(40):
        origin = rng.uniform(-30.0, -5.0, 3)
        target = CENTER + rng.normal(scale=12.0, size=3)
        hits = ray_mesh_intersections(sphere_mesh, origin, target - origin)
        assert len(hits) % 2 == 0


def test_parity_agrees_with_voxel_labels(sphere_volume, sphere_mesh, rng):
    mask = sphere_volume.pair_mask(2, 3)
    agree = 0
    total = 200
    for _ in range(total):
        idx = rng.integers(8, 56, 3)  # (x, y, z)
        point = idx + 0.5
        direction = rng.normal(size=3)
        hits = ray_mesh_intersections(sphere_mesh, point.astype(float), direction)
        inside = len(hits) % 2 == 1
        labeled = bool(mask[idx[2], idx[1], idx[0]])
        agree += inside == labeled
    assert agree / total >= 0.99


def test_zero_direction_rejected(sphere_mesh):
    with pytest.raises(GeometryError):
        ray_mesh_intersections(sphere_mesh, np.zeros(3), np.zeros(3))
