import numpy as np
import pytest

from voxscope.errors import DimensionError, InsufficientSlicesError
from voxscope.homotopy import resample_labels, resample_volume
from voxscope.phantom import growing_disk_volume, sparsify_slices

from oracles import dice_score


def test_identical_slices_reproduce_everywhere():
    slice_ = np.zeros((12, 12), dtype=np.uint16)
    slice_[4:8, 4:8] = 131  # arbitrary nonbackground code
    sparse = np.stack([slice_] * 4)
    dense = resample_labels(sparse, stride=5)
    assert dense.shape[0] == 16
    for z in range(16):
        assert np.array_equal(dense[z], slice_)


def test_integer_positions_reproduce_inputs_exactly():
    vol = growing_disk_volume(48, 48, 26, r0=6.0, dr=0.25)
    sparse = vol.labels[::5]
    dense = resample_labels(sparse, stride=5, out_nz=26)
    for i in range(sparse.shape[0]):
        assert np.array_equal(dense[5 * i], sparse[i])


def test_growing_disk_dice_against_dense_truth():
    truth = growing_disk_volume(64, 64, 60, r0=8.0, dr=0.2)
    dense = resample_labels(truth.labels[::5], stride=5, out_nz=60)
    score = dice_score(dense != 0, truth.labels != 0)
    assert score >= 0.95


def test_too_few_slices_rejected():
    sparse = np.zeros((2, 8, 8), dtype=np.uint16)
    with pytest.raises(InsufficientSlicesError):
        resample_labels(sparse, stride=5)


def test_bad_stride_rejected():
    sparse = np.zeros((4, 8, 8), dtype=np.uint16)
    with pytest.raises(ValueError, match="stride"):
        resample_labels(sparse, stride=1)


def test_ragged_input_rejected():
    slices = [np.zeros((4, 4), dtype=np.uint16), np.zeros((5, 4), dtype=np.uint16)]
    with pytest.raises((DimensionError, ValueError)):
        resample_labels(np.asarray(slices, dtype=object), stride=2)


def test_absent_label_never_appears_mid_gap():
    a, b = 131, 259
    sparse = np.zeros((4, 16, 16), dtype=np.uint16)
    sparse[:, 6:10, 6:10] = a
    sparse[0, 2:4, 2:4] = b  # label b exists only in the first slice
    dense = resample_labels(sparse, stride=4)
    # gaps bounded by slices 1..3 must not contain label b
    assert not (dense[5:] == b).any()


def test_two_adjacent_labels_keep_their_sides():
    lo, hi = 131, 259
    slice_ = np.zeros((16, 16), dtype=np.uint16)
    slice_[4:12, 2:8] = lo
    slice_[4:12, 8:14] = hi
    sparse = np.stack([slice_] * 4)
    dense = resample_labels(sparse, stride=3)
    for z in range(dense.shape[0]):
        assert np.array_equal(dense[z], slice_)


def test_resample_is_deterministic():
    vol = growing_disk_volume(32, 32, 16, r0=5.0, dr=0.2)
    sparse = vol.labels[::5]
    a = resample_labels(sparse, stride=5, out_nz=16)
    b = resample_labels(sparse, stride=5, out_nz=16)
    assert np.array_equal(a, b)


def test_volume_wrapper_round_trip():
    vol = growing_disk_volume(32, 32, 21, r0=5.0, dr=0.15)
    sparse_vol = sparsify_slices(vol, 5)
    dense_vol = resample_volume(sparse_vol, 5)
    assert dense_vol.labels.shape == vol.labels.shape
    assert dice_score(dense_vol.labels != 0, vol.labels != 0) >= 0.95
    assert np.array_equal(dense_vol.labels[::5], vol.labels[::5])


def test_stride_one_volume_is_identity():
    vol = growing_disk_volume(24, 24, 18, r0=5.0, dr=0.1)
    assert resample_volume(vol, 1) is vol
