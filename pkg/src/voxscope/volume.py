"""Hierarchical labeled volumes.

A labeled volume pairs an 8-bit intensity grid with a 16-bit label grid.
Each label packs a three-level anatomical hierarchy into one code:
bits 0-6 hold the finest level (L3), bits 7-10 the organ level (L2),
bits 11-14 the body-system level (L1). Bit 15 is reserved and must stay
clear. Code zero is background.

Grids are stored as numpy arrays indexed ``[z, y, x]`` so that the raw
on-disk byte order is x-fastest little-endian.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CodeRangeError,
    ReservedBitError,
    UnrepairableError,
    VolumeFormatError,
)

L3_MASK = 0x7F
L2_MASK = 0xF
L1_MASK = 0xF
L2_SHIFT = 7
L1_SHIFT = 11
RESERVED_BIT = 1 << 15

MANIFEST_MAGIC = "VXS1"


def encode_code(l1: int, l2: int, l3: int = 0) -> int:
    """Pack (l1, l2, l3) into a 16-bit voxel code."""
    if not 0 <= l1 <= L1_MASK:
        raise CodeRangeError(f"l1 component {l1} outside [0, {L1_MASK}]")
    if not 0 <= l2 <= L2_MASK:
        raise CodeRangeError(f"l2 component {l2} outside [0, {L2_MASK}]")
    if not 0 <= l3 <= L3_MASK:
        raise CodeRangeError(f"l3 component {l3} outside [0, {L3_MASK}]")
    return (l1 << L1_SHIFT) | (l2 << L2_SHIFT) | l3


def decode_code(code: int) -> tuple[int, int, int]:
    """Unpack a 16-bit voxel code into (l1, l2, l3)."""
    if code & RESERVED_BIT:
        raise ReservedBitError(f"code {code:#06x} has the reserved bit 15 set")
    if not 0 <= code < RESERVED_BIT:
        raise CodeRangeError(f"code {code} does not fit in 15 bits")
    return (code >> L1_SHIFT) & L1_MASK, (code >> L2_SHIFT) & L2_MASK, code & L3_MASK


def code_l1(codes: np.ndarray) -> np.ndarray:
    """Vectorized L1 extraction from a code grid."""
    return (codes >> L1_SHIFT) & L1_MASK


def code_l2(codes: np.ndarray) -> np.ndarray:
    """Vectorized L2 extraction from a code grid."""
    return (codes >> L2_SHIFT) & L2_MASK


def code_for_pair(l1: int, l2: int) -> int:
    """Code of an (l1, l2) pair with a zero fine level."""
    return encode_code(l1, l2, 0)


@dataclass(frozen=True)
class LabeledVolume:
    """Immutable intensity + label grid pair with voxel spacing in mm.

    ``intensity`` is uint8 and ``labels`` uint16, both shaped (nz, ny, nx).
    Arrays are frozen (non-writeable) on construction so instances can be
    shared across threads.
    """

    intensity: np.ndarray
    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.intensity.shape != self.labels.shape:
            raise VolumeFormatError(
                f"intensity shape {self.intensity.shape} != label shape {self.labels.shape}"
            )
        if self.intensity.ndim != 3 or 0 in self.intensity.shape:
            raise VolumeFormatError(f"need a non-empty 3D grid, got {self.intensity.shape}")
        if any(s <= 0 for s in self.spacing):
            raise VolumeFormatError(f"spacing must be positive, got {self.spacing}")
        intensity = np.ascontiguousarray(self.intensity, dtype=np.uint8)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
        if (labels & RESERVED_BIT).any():
            raise ReservedBitError("label grid contains codes with bit 15 set")
        intensity.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)."""
        nz, ny, nx = self.labels.shape
        return nx, ny, nz

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        nx, ny, nz = self.dims
        sx, sy, sz = self.spacing
        return nx * sx, ny * sy, nz * sz

    def label_pairs(self) -> list[tuple[int, int]]:
        """Distinct nonbackground (l1, l2) pairs present in the grid."""
        codes = np.unique(self.labels)
        codes = codes[codes != 0]
        pairs = {(int(c) >> L1_SHIFT & L1_MASK, int(c) >> L2_SHIFT & L2_MASK) for c in codes}
        return sorted(pairs)

    def pair_mask(self, l1: int, l2: int) -> np.ndarray:
        """Boolean grid of voxels whose code carries the given (l1, l2)."""
        return (code_l1(self.labels) == l1) & (code_l2(self.labels) == l2)

    def histogram(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for pair in self.label_pairs():
            counts[pair] = int(self.pair_mask(*pair).sum())
        return counts


def repair_labels(volume: LabeledVolume, unlabeled_slices: set[int]) -> LabeledVolume:
    """Replace each unlabeled z-slice with the nearest labeled slice.

    Ties between equally distant labeled slices resolve to the lower z.
    Labeled slices and the intensity grid are untouched.
    """
    nz = volume.labels.shape[0]
    unlabeled = {int(z) for z in unlabeled_slices}
    for z in unlabeled:
        if not 0 <= z < nz:
            raise ValueError(f"slice index {z} outside [0, {nz})")
    labeled = [z for z in range(nz) if z not in unlabeled]
    if not labeled:
        raise UnrepairableError("every slice is unlabeled; nothing to propagate")
    if not unlabeled:
        return volume

    labeled_arr = np.asarray(labeled)
    labels = volume.labels.copy()
    for z in sorted(unlabeled):
        dist = np.abs(labeled_arr - z)
        src = int(labeled_arr[np.argmin(dist)])  # argmin keeps the lower z on ties
        labels[z] = volume.labels[src]
    return LabeledVolume(volume.intensity, labels, volume.spacing)


def downsample(volume: LabeledVolume, factor: int) -> LabeledVolume:
    """Integer-strided downsampling of both grids; spacing scales up."""
    if factor < 1:
        raise ValueError(f"downsample factor must be >= 1, got {factor}")
    if factor == 1:
        return volume
    sx, sy, sz = volume.spacing
    return LabeledVolume(
        volume.intensity[::factor, ::factor, ::factor],
        volume.labels[::factor, ::factor, ::factor],
        (sx * factor, sy * factor, sz * factor),
    )


# ---------------------------------------------------------------------------
# container I/O: <name>.manifest + <name>.intensity.raw + <name>.labels.raw


def _manifest_text(volume: LabeledVolume) -> str:
    nx, ny, nz = volume.dims
    sx, sy, sz = volume.spacing
    return (
        f"magic {MANIFEST_MAGIC}\n"
        f"dims {nx} {ny} {nz}\n"
        f"spacing_mm {sx!r} {sy!r} {sz!r}\n"
        "intensity_bits 8\n"
        "label_bits 16\n"
        "byte_order LE\n"
    )


def container_paths(path: str | Path) -> tuple[Path, Path, Path]:
    """(manifest, intensity blob, label blob) paths for a name prefix."""
    prefix = str(path)
    return (
        Path(prefix + ".manifest"),
        Path(prefix + ".intensity.raw"),
        Path(prefix + ".labels.raw"),
    )


def save_volume(volume: LabeledVolume, path: str | Path) -> None:
    """Write a volume container. ``path`` is the name prefix (no extension)."""
    manifest, intensity, labels = container_paths(path)
    manifest.parent.mkdir(parents=True, exist_ok=True)
    manifest.write_text(_manifest_text(volume), encoding="utf-8")
    intensity.write_bytes(volume.intensity.tobytes())
    labels.write_bytes(volume.labels.astype("<u2", copy=False).tobytes())


def _parse_manifest(text: str) -> dict[str, list[str]]:
    fields: dict[str, list[str]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, *values = line.split()
        fields[key] = values
    return fields


def load_volume(path: str | Path) -> LabeledVolume:
    """Load a volume container written by :func:`save_volume`."""
    manifest_path, intensity_path, label_path = container_paths(path)
    if not manifest_path.exists():
        raise VolumeFormatError(f"missing manifest {manifest_path}")
    fields = _parse_manifest(manifest_path.read_text(encoding="utf-8"))

    magic = fields.get("magic", [""])
    if magic != [MANIFEST_MAGIC]:
        raise VolumeFormatError(f"bad magic {magic!r}, expected {MANIFEST_MAGIC!r}")
    try:
        nx, ny, nz = (int(v) for v in fields["dims"])
        spacing = tuple(float(v) for v in fields["spacing_mm"])
        if len(spacing) != 3:
            raise ValueError(f"spacing_mm needs 3 values, got {len(spacing)}")
        intensity_bits = int(fields["intensity_bits"][0])
        label_bits = int(fields["label_bits"][0])
    except (KeyError, ValueError, IndexError) as exc:
        raise VolumeFormatError(f"malformed manifest: {exc}") from exc
    if intensity_bits != 8 or label_bits != 16:
        raise VolumeFormatError(
            f"unsupported bit depths intensity={intensity_bits} labels={label_bits}"
        )
    if fields.get("byte_order", ["LE"]) != ["LE"]:
        raise VolumeFormatError("only little-endian containers are supported")
    if min(nx, ny, nz) <= 0:
        raise VolumeFormatError(f"non-positive dims ({nx}, {ny}, {nz})")

    n = nx * ny * nz
    try:
        intensity_blob = intensity_path.read_bytes()
        label_blob = label_path.read_bytes()
    except OSError as exc:
        raise VolumeFormatError(f"missing blob: {exc}") from exc
    if len(intensity_blob) != n:
        raise VolumeFormatError(
            f"intensity blob holds {len(intensity_blob)} bytes, manifest dims need {n}"
        )
    if len(label_blob) != 2 * n:
        raise VolumeFormatError(
            f"label blob holds {len(label_blob)} bytes, manifest dims need {2 * n}"
        )
    intensity = np.frombuffer(intensity_blob, dtype=np.uint8).reshape(nz, ny, nx)
    labels = np.frombuffer(label_blob, dtype="<u2").astype(np.uint16).reshape(nz, ny, nx)
    return LabeledVolume(intensity, labels, spacing)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# segmentation hierarchy: display names and colors per (l1, l2)


@dataclass(frozen=True)
class HierarchyEntry:
    l1: int
    l2: int
    name: str
    color: tuple[int, int, int, int]  # RGBA 0-255


@dataclass(frozen=True)
class SegmentationHierarchy:
    """Lookup table from (l1, l2) to display name and color."""

    entries: tuple[HierarchyEntry, ...]
    _by_pair: dict[tuple[int, int], HierarchyEntry] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        by_pair: dict[tuple[int, int], HierarchyEntry] = {}
        for entry in self.entries:
            if not entry.name:
                raise ValueError(f"empty display name for ({entry.l1}, {entry.l2})")
            key = (entry.l1, entry.l2)
            if key in by_pair:
                raise ValueError(f"duplicate hierarchy pair {key}")
            by_pair[key] = entry
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "_by_pair", by_pair)

    def lookup(self, l1: int, l2: int) -> HierarchyEntry | None:
        return self._by_pair.get((l1, l2))

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._by_pair)

    def pairs_in_system(self, l1: int) -> list[tuple[int, int]]:
        return sorted(key for key in self._by_pair if key[0] == l1)

    def name_of(self, l1: int, l2: int) -> str:
        entry = self.lookup(l1, l2)
        return entry.name if entry else f"({l1},{l2})"

    def by_name(self, name: str) -> HierarchyEntry | None:
        for entry in self.entries:
            if entry.name == name:
                return entry
        return None


def save_hierarchy(hierarchy: SegmentationHierarchy, path: str | Path) -> None:
    with io.StringIO() as buf:
        for e in hierarchy.entries:
            r, g, b, a = e.color
            buf.write(f"{e.l1},{e.l2},{e.name},#{r:02X}{g:02X}{b:02X}{a:02X}\n")
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_hierarchy(path: str | Path) -> SegmentationHierarchy:
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4 or not parts[3].startswith("#") or len(parts[3]) != 9:
            raise VolumeFormatError(f"{path}:{lineno}: expected 'l1,l2,name,#RRGGBBAA'")
        try:
            l1, l2 = int(parts[0]), int(parts[1])
            color = tuple(int(parts[3][i : i + 2], 16) for i in (1, 3, 5, 7))
        except ValueError as exc:
            raise VolumeFormatError(f"{path}:{lineno}: {exc}") from exc
        entries.append(HierarchyEntry(l1, l2, parts[2], color))  # type: ignore[arg-type]
    return SegmentationHierarchy(tuple(entries))
