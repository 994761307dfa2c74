import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from voxscope.errors import DimensionError
from voxscope.sdf import euclidean_distance, signed_distance_2d

from oracles import brute_signed_distance


def _disk_mask(n=33, radius=10.0):
    c = n // 2
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return (yy - c) ** 2 + (xx - c) ** 2 <= radius**2


def test_disk_center_value():
    mask = _disk_mask()
    field = signed_distance_2d(mask).grid
    c = mask.shape[0] // 2
    assert abs(field[c, c] + 10.0) <= 0.5 + 1e-9


def test_boundary_pixel_is_within_half_diagonal():
    mask = _disk_mask()
    field = signed_distance_2d(mask).grid
    boundary = mask & ~(
        np.roll(mask, 1, 0) & np.roll(mask, -1, 0) & np.roll(mask, 1, 1) & np.roll(mask, -1, 1)
    )
    assert np.abs(field[boundary]).max() <= 0.5 * np.sqrt(2.0) + 1e-9


def test_point_outside_disk_along_axis():
    mask = _disk_mask(41, 10.0)
    field = signed_distance_2d(mask).grid
    c = mask.shape[0] // 2
    # pixel 5 beyond the last inside pixel on the +x axis
    assert abs(field[c, c + 15] - 5.0) <= 0.5 + 1e-9


def test_degenerate_masks_use_sentinel():
    empty = signed_distance_2d(np.zeros((8, 12), dtype=bool)).grid
    diag = np.hypot(12, 8)
    assert (empty >= diag).all() and np.isfinite(empty).all()
    full = signed_distance_2d(np.ones((8, 12), dtype=bool)).grid
    assert (full <= -diag).all() and np.isfinite(full).all()


def test_empty_grid_raises():
    with pytest.raises(DimensionError):
        signed_distance_2d(np.zeros((0, 4), dtype=bool))
    with pytest.raises(DimensionError):
        euclidean_distance(np.zeros((4, 0), dtype=bool))


def test_pixel_size_scales_field():
    mask = _disk_mask(17, 5.0)
    one = signed_distance_2d(mask, pixel_size=1.0).grid
    two = signed_distance_2d(mask, pixel_size=2.0).grid
    assert np.allclose(two, 2.0 * one)


def test_sign_convention_separates_sides():
    mask = _disk_mask(25, 7.0)
    field = signed_distance_2d(mask).grid
    assert (field[mask] <= -0.5 + 1e-12).all()
    assert (field[~mask] >= 0.5 - 1e-12).all()


@given(hnp.arrays(dtype=bool, shape=st.tuples(st.integers(2, 10), st.integers(2, 10))))
@settings(max_examples=60, deadline=None)
def test_matches_brute_force_oracle(mask):
    field = signed_distance_2d(mask).grid
    expected = brute_signed_distance(mask)
    assert np.allclose(field, expected, atol=1e-9)


@given(hnp.arrays(dtype=bool, shape=st.tuples(st.integers(2, 12), st.integers(2, 12))))
@settings(max_examples=60, deadline=None)
def test_one_lipschitz_between_neighbors(mask):
    field = signed_distance_2d(mask).grid
    dx = np.abs(np.diff(field, axis=1))
    dy = np.abs(np.diff(field, axis=0))
    assert dx.max(initial=0.0) <= 1.0 + 1e-9
    assert dy.max(initial=0.0) <= 1.0 + 1e-9
    diag = np.abs(field[1:, 1:] - field[:-1, :-1])
    assert diag.max(initial=0.0) <= np.sqrt(2.0) + 1e-9
