"""Scene description shared by the renderer and the session protocol."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, GeometryError


def _vec(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(3).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. ``ipd_mm`` is the interocular distance for stereo."""

    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    vertical_fov: float = np.pi / 3.0
    width: int = 256
    height: int = 192
    ipd_mm: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        object.__setattr__(self, "forward", _vec(self.forward))
        object.__setattr__(self, "up", _vec(self.up))
        if np.linalg.norm(self.forward) == 0.0 or np.linalg.norm(self.up) == 0.0:
            raise GeometryError("camera forward/up must be non-zero")
        if np.linalg.norm(np.cross(self.forward, self.up)) < 1e-12:
            raise GeometryError("camera forward and up are parallel")
        if not 0.0 < self.vertical_fov < np.pi:
            raise GeometryError(f"vertical fov {self.vertical_fov} outside (0, pi)")
        if self.ipd_mm < 0.0:
            raise GeometryError(f"ipd must be >= 0, got {self.ipd_mm}")
        if self.width <= 0 or self.height <= 0:
            raise DimensionError(f"image dims must be positive, got {self.width}x{self.height}")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward), orthonormal."""
        fwd = self.forward / np.linalg.norm(self.forward)
        right = np.cross(fwd, self.up)
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return right, up, fwd

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / np.tan(self.vertical_fov / 2.0)

    def eye_position(self, eye: str) -> np.ndarray:
        right, _, _ = self.basis()
        if eye == "mono":
            return self.position
        if eye == "left":
            return self.position - right * (self.ipd_mm / 2.0)
        if eye == "right":
            return self.position + right * (self.ipd_mm / 2.0)
        raise ValueError(f"eye must be left/right/mono, got {eye!r}")

    def rays_through(self, px: np.ndarray, py: np.ndarray, eye: str = "mono"):
        """Unit directions through full-image pixel coordinates (float, px).

        ``px``/``py`` are measured in pixels with (0, 0) the top-left image
        corner; pixel centers sit at half-integers.
        """
        right, up, fwd = self.basis()
        f = self.focal_px
        x = (np.asarray(px, dtype=np.float64) - self.width / 2.0) / f
        y = (self.height / 2.0 - np.asarray(py, dtype=np.float64)) / f
        dirs = fwd[None, :] + x[:, None] * right[None, :] + y[:, None] * up[None, :]
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return self.eye_position(eye), dirs


@dataclass(frozen=True)
class ClipPlane:
    point: np.ndarray = field(default_factory=lambda: _vec((0.0, 0.0, 0.0)))
    normal: np.ndarray = field(default_factory=lambda: _vec((0.0, 0.0, 1.0)))
    enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "point", _vec(self.point))
        normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(normal)
        if self.enabled and norm < 1e-12:
            raise GeometryError("enabled clip plane needs a non-zero normal")
        if norm > 0:
            normal = normal / norm
        object.__setattr__(self, "normal", _vec(normal))

    def oriented_normal(self, camera_position: np.ndarray) -> np.ndarray:
        """Normal flipped so the camera lies in the clipped (positive) half."""
        side = float(np.dot(camera_position - self.point, self.normal))
        return self.normal if side > 0.0 else -self.normal


@dataclass(frozen=True)
class RenderSettings:
    step_size: float = 0.5
    max_steps: int = 4096
    early_termination_alpha: float = 0.98
    background: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.step_size <= 0.0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.max_steps <= 0:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if not 0.0 < self.early_termination_alpha <= 1.0:
            raise ValueError(
                f"early_termination_alpha outside (0, 1]: {self.early_termination_alpha}"
            )


@dataclass(frozen=True)
class ModelTransform:
    """Uniform scale followed by translation, model -> world."""

    scale: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: _vec((0.0, 0.0, 0.0)))

    def __post_init__(self):
        if self.scale <= 0.0:
            raise GeometryError(f"model scale must be positive, got {self.scale}")
        object.__setattr__(self, "translation", _vec(self.translation))

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts) * self.scale + self.translation

    def to_model(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts) - self.translation) / self.scale


@dataclass(frozen=True)
class SceneState:
    """Complete render input: camera pose, visibility, clipping, mode."""

    camera: Camera
    selection: frozenset[tuple[int, int]] = frozenset()
    clip: ClipPlane = ClipPlane()
    gaze: tuple[float, float] = (0.0, 0.0)
    mode: str = "explore"  # explore | bioscope
    bioscope_target: tuple[int, int] | None = None
    model_transform: ModelTransform = ModelTransform()
    settings: RenderSettings = RenderSettings()
    reduction: float = 1.0
    nav_active: frozenset[str] = frozenset()
    saved_state: "SceneState | None" = None

    def __post_init__(self):
        if self.mode not in ("explore", "bioscope"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "bioscope" and self.bioscope_target is None:
            raise ValueError("bioscope mode requires a target")
        if self.reduction < 1.0:
            raise ValueError(f"reduction must be >= 1, got {self.reduction}")
        object.__setattr__(self, "selection", frozenset(self.selection))

    def with_(self, **changes) -> "SceneState":
        return replace(self, **changes)
