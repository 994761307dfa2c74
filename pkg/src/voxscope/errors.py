"""Exception types shared across the package."""


class VoxscopeError(Exception):
    """Base class for all package-specific errors."""


class CodeRangeError(VoxscopeError, ValueError):
    """A hierarchy-code component is outside its bit-field range."""


class ReservedBitError(VoxscopeError, ValueError):
    """A 16-bit voxel code has its reserved top bit set."""


class VolumeFormatError(VoxscopeError, ValueError):
    """A volume container on disk is malformed or inconsistent."""


class UnrepairableError(VoxscopeError, ValueError):
    """Label repair was requested but no labeled slice exists."""


class GeometryError(VoxscopeError, ValueError):
    """A shape or ray is geometrically invalid (out of bounds, zero direction)."""


class DimensionError(VoxscopeError, ValueError):
    """Grid or image dimensions are empty or inconsistent."""


class InsufficientSlicesError(VoxscopeError, ValueError):
    """Too few source slices for slab interpolation."""


class TopologyError(VoxscopeError, ValueError):
    """A mesh operation received non-manifold input."""


class CapacityError(VoxscopeError, ValueError):
    """A reduced-resolution budget is too small to represent the request."""


class ProtocolError(VoxscopeError, ValueError):
    """Wire-level decode failure. ``code`` is a stable machine-readable tag."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)
