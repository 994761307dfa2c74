import numpy as np
import pytest

from voxscope.errors import VolumeFormatError
from voxscope.volume import (
    HierarchyEntry,
    LabeledVolume,
    SegmentationHierarchy,
    container_paths,
    downsample,
    load_hierarchy,
    load_volume,
    save_hierarchy,
    save_volume,
)


def test_round_trip_is_bit_exact(tmp_path, sphere_volume):
    save_volume(sphere_volume, tmp_path / "vol")
    loaded = load_volume(tmp_path / "vol")
    assert np.array_equal(loaded.intensity, sphere_volume.intensity)
    assert np.array_equal(loaded.labels, sphere_volume.labels)
    assert loaded.spacing == sphere_volume.spacing


def test_truncated_label_blob_is_rejected(tmp_path, sphere_volume):
    save_volume(sphere_volume, tmp_path / "vol")
    _, _, labels = container_paths(tmp_path / "vol")
    blob = labels.read_bytes()
    labels.write_bytes(blob[:-10])
    with pytest.raises(VolumeFormatError, match="label blob"):
        load_volume(tmp_path / "vol")


def test_bad_magic_is_rejected(tmp_path, sphere_volume):
    save_volume(sphere_volume, tmp_path / "vol")
    manifest, _, _ = container_paths(tmp_path / "vol")
    manifest.write_text(manifest.read_text().replace("VXS1", "NOPE"))
    with pytest.raises(VolumeFormatError, match="magic"):
        load_volume(tmp_path / "vol")


def test_minimal_container_loads(tmp_path):
    # dims 2x2x2: 8 intensity bytes, 16 label bytes
    manifest, intensity, labels = container_paths(tmp_path / "tiny")
    manifest.write_text(
        "magic VXS1\ndims 2 2 2\nspacing_mm 1.0 1.0 1.0\n"
        "intensity_bits 8\nlabel_bits 16\nbyte_order LE\n"
    )
    intensity.write_bytes(bytes(range(8)))
    labels.write_bytes(bytes(16))
    vol = load_volume(tmp_path / "tiny")
    assert vol.dims == (2, 2, 2)
    assert vol.intensity.ravel().tolist() == list(range(8))


def test_dims_blob_mismatch(tmp_path):
    manifest, intensity, labels = container_paths(tmp_path / "bad")
    manifest.write_text(
        "magic VXS1\ndims 2 2 2\nspacing_mm 1.0 1.0 1.0\n"
        "intensity_bits 8\nlabel_bits 16\nbyte_order LE\n"
    )
    intensity.write_bytes(bytes(9))
    labels.write_bytes(bytes(16))
    with pytest.raises(VolumeFormatError, match="intensity blob"):
        load_volume(tmp_path / "bad")


def test_label_ordering_is_x_fastest(tmp_path):
    labels = np.arange(8, dtype=np.uint16).reshape(2, 2, 2)  # [z, y, x]
    vol = LabeledVolume(np.zeros((2, 2, 2), dtype=np.uint8), labels)
    save_volume(vol, tmp_path / "order")
    _, _, label_path = container_paths(tmp_path / "order")
    raw = np.frombuffer(label_path.read_bytes(), dtype="<u2")
    # consecutive x values must be adjacent on disk
    assert raw.tolist() == list(range(8))


def test_downsample_strides_grids(sphere_volume):
    half = downsample(sphere_volume, 2)
    assert half.dims == (32, 32, 32)
    assert half.spacing == (2.0, 2.0, 2.0)
    assert np.array_equal(half.labels, sphere_volume.labels[::2, ::2, ::2])


def test_volume_arrays_are_immutable(sphere_volume):
    with pytest.raises(ValueError):
        sphere_volume.labels[0, 0, 0] = 1


def test_spacing_must_be_positive():
    grid = np.zeros((2, 2, 2), dtype=np.uint8)
    with pytest.raises(VolumeFormatError, match="spacing"):
        LabeledVolume(grid, grid.astype(np.uint16), (1.0, 0.0, 1.0))


def test_hierarchy_file_round_trip(tmp_path, hierarchy):
    save_hierarchy(hierarchy, tmp_path / "h.txt")
    loaded = load_hierarchy(tmp_path / "h.txt")
    assert loaded.entries == hierarchy.entries
    assert loaded.name_of(2, 3) == "round-organ"


def test_hierarchy_rejects_duplicates():
    entry = HierarchyEntry(1, 2, "thing", (1, 2, 3, 4))
    with pytest.raises(ValueError, match="duplicate"):
        SegmentationHierarchy((entry, entry))


def test_hierarchy_rejects_bad_line(tmp_path):
    (tmp_path / "h.txt").write_text("1,2,name-without-color\n")
    with pytest.raises(VolumeFormatError):
        load_hierarchy(tmp_path / "h.txt")
