"""Client-server contract: control messages, scene transitions, framing.

Wire framing: magic "HVW1", one type byte, a little-endian u32 payload
length, then the payload. Control payloads and small data payloads are
canonical JSON (sorted keys, no whitespace); frame payloads use the binary
foveated-frame layout. The decoder never raises anything except
:class:`ProtocolError` on arbitrary input.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields as dc_fields
from typing import Any

import numpy as np

from .errors import ProtocolError
from .fovea import FoveatedFrame, pack_frame, unpack_frame
from .render import bioscope_transform, exit_bioscope
from .scene import Camera, ClipPlane, ModelTransform, SceneState
from .volume import SegmentationHierarchy

MAGIC = b"HVW1"
MAX_PAYLOAD = 64 * 1024 * 1024
_HEADER = struct.Struct("<4sBI")

NAV_DIRECTIONS = ("forward", "backward", "left", "right", "up", "down")


# -- control messages --------------------------------------------------------


@dataclass(frozen=True)
class SetCamera:
    position: tuple[float, float, float]
    forward: tuple[float, float, float]
    up: tuple[float, float, float]
    vertical_fov: float
    width: int
    height: int
    ipd_mm: float = 6.0


@dataclass(frozen=True)
class SetGaze:
    gx: float
    gy: float


@dataclass(frozen=True)
class ToggleOrgan:
    l1: int
    l2: int


@dataclass(frozen=True)
class SelectAllInSystem:
    l1: int


@dataclass(frozen=True)
class DeselectAllInSystem:
    l1: int


@dataclass(frozen=True)
class SetClipPlane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    enabled: bool


@dataclass(frozen=True)
class Navigate:
    direction: str
    active: bool


@dataclass(frozen=True)
class EnterBioscope:
    l1: int
    l2: int


@dataclass(frozen=True)
class ExitBioscope:
    pass


@dataclass(frozen=True)
class PickOrgan:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]


@dataclass(frozen=True)
class SetReduction:
    k: float


ControlMessage = (
    SetCamera
    | SetGaze
    | ToggleOrgan
    | SelectAllInSystem
    | DeselectAllInSystem
    | SetClipPlane
    | Navigate
    | EnterBioscope
    | ExitBioscope
    | PickOrgan
    | SetReduction
)


# -- data messages ------------------------------------------------------------


@dataclass(frozen=True)
class FrameMessage:
    frame: FoveatedFrame


@dataclass(frozen=True)
class PickResult:
    name: str | None
    l1: int | None
    l2: int | None


@dataclass(frozen=True)
class Ack:
    frame_id: int


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    text: str = ""


@dataclass(frozen=True)
class Hello:
    """Session opener carrying the display hierarchy (name + color per pair)."""

    entries: tuple[tuple[int, int, str, tuple[int, int, int, int]], ...]

    @staticmethod
    def from_hierarchy(hierarchy: SegmentationHierarchy) -> "Hello":
        return Hello(
            tuple((e.l1, e.l2, e.name, tuple(e.color)) for e in hierarchy.entries)
        )


DataMessage = FrameMessage | PickResult | Ack | ErrorMessage | Hello

_CONTROL_TYPES: dict[int, type] = {
    1: SetCamera,
    2: SetGaze,
    3: ToggleOrgan,
    4: SelectAllInSystem,
    5: DeselectAllInSystem,
    6: SetClipPlane,
    7: Navigate,
    8: EnterBioscope,
    9: ExitBioscope,
    10: PickOrgan,
    11: SetReduction,
}
_DATA_TYPES: dict[int, type] = {
    32: FrameMessage,
    33: PickResult,
    34: Ack,
    35: ErrorMessage,
    36: Hello,
}
_TYPE_IDS = {cls: tid for tid, cls in {**_CONTROL_TYPES, **_DATA_TYPES}.items()}


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def serialize(msg: ControlMessage | DataMessage) -> bytes:
    """Frame a message: HVW1 + type + length + payload."""
    tid = _TYPE_IDS.get(type(msg))
    if tid is None:
        raise ValueError(f"unknown message type {type(msg).__name__}")
    if isinstance(msg, FrameMessage):
        payload = pack_frame(msg.frame)
    else:
        doc = {f.name: _to_jsonable(getattr(msg, f.name)) for f in dc_fields(msg)}
        payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(MAGIC, tid, len(payload)) + payload


def _tuple3(v) -> tuple[float, float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ValueError(f"need a 3-vector, got {v!r}")
    return tuple(float(x) for x in v)  # type: ignore[return-value]


def _build(cls: type, doc: dict) -> ControlMessage | DataMessage:
    if not isinstance(doc, dict):
        raise ValueError("payload must be a JSON object")
    names = {f.name for f in dc_fields(cls)}
    if set(doc) != names:
        raise ValueError(f"{cls.__name__} fields {sorted(names)} != {sorted(doc)}")
    vectors = {"position", "forward", "up", "point", "normal", "origin"}
    if cls is PickOrgan:
        vectors.add("direction")
    kw: dict[str, Any] = {}
    for f in dc_fields(cls):
        v = doc[f.name]
        if f.name in vectors:
            kw[f.name] = _tuple3(v)
        elif f.name in ("l1", "l2") and cls is PickResult:
            if v is not None and not isinstance(v, (int, np.integer)):
                raise ValueError(f"{f.name} must be an integer or null")
            kw[f.name] = None if v is None else int(v)
        elif f.name in ("l1", "l2", "width", "height", "frame_id"):
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"{f.name} must be an integer")
            kw[f.name] = int(v)
        elif f.name in ("gx", "gy", "vertical_fov", "ipd_mm", "k"):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ValueError(f"{f.name} must be a number")
            kw[f.name] = float(v)
        elif f.name in ("enabled", "active"):
            if not isinstance(v, bool):
                raise ValueError(f"{f.name} must be a boolean")
            kw[f.name] = v
        elif f.name in ("direction", "code", "text"):
            if not isinstance(v, str):
                raise ValueError(f"{f.name} must be a string")
            kw[f.name] = v
        elif f.name == "name":
            if v is not None and not isinstance(v, str):
                raise ValueError("name must be a string or null")
            kw[f.name] = v
        elif f.name == "entries":
            entries = []
            for item in v:
                l1, l2, name, color = item
                entries.append((int(l1), int(l2), str(name), tuple(int(c) for c in color)))
            kw[f.name] = tuple(entries)
        else:
            kw[f.name] = v
    msg = cls(**kw)
    _validate(msg)
    return msg


def _validate(msg) -> None:
    if isinstance(msg, Navigate) and msg.direction not in NAV_DIRECTIONS:
        raise ValueError(f"unknown navigation direction {msg.direction!r}")
    if isinstance(msg, Ack) and msg.frame_id < 0:
        raise ValueError("frame_id must be non-negative")
    if isinstance(msg, SetCamera):
        Camera(msg.position, msg.forward, msg.up, msg.vertical_fov, msg.width, msg.height, msg.ipd_mm)
    if isinstance(msg, SetClipPlane) and msg.enabled:
        if not np.linalg.norm(np.asarray(msg.normal)):
            raise ValueError("clip normal must be non-zero when enabled")
    if isinstance(msg, SetReduction) and not msg.k >= 1.0:
        raise ValueError(f"reduction must be >= 1, got {msg.k}")
    if isinstance(msg, PickOrgan) and not np.linalg.norm(np.asarray(msg.direction)):
        raise ValueError("pick direction must be non-zero")
    if isinstance(msg, (ToggleOrgan, EnterBioscope)):
        if not (0 <= msg.l1 <= 15 and 0 <= msg.l2 <= 15):
            raise ValueError(f"hierarchy pair ({msg.l1}, {msg.l2}) out of range")
    if isinstance(msg, (SelectAllInSystem, DeselectAllInSystem)) and not 0 <= msg.l1 <= 15:
        raise ValueError(f"system id {msg.l1} out of range")


def deserialize(blob: bytes) -> ControlMessage | DataMessage:
    """Decode one framed message; raises :class:`ProtocolError` only."""
    if not isinstance(blob, (bytes, bytearray, memoryview)):
        raise ProtocolError("bad-payload", "expected bytes")
    blob = bytes(blob)
    if len(blob) < _HEADER.size:
        raise ProtocolError("truncated", f"{len(blob)} bytes is shorter than a header")
    magic, tid, length = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ProtocolError("bad-magic", f"got {magic!r}")
    if length > MAX_PAYLOAD:
        raise ProtocolError("length-overflow", f"{length} exceeds {MAX_PAYLOAD}")
    if len(blob) != _HEADER.size + length:
        raise ProtocolError(
            "truncated", f"header promises {length} payload bytes, found {len(blob) - _HEADER.size}"
        )
    cls = _CONTROL_TYPES.get(tid) or _DATA_TYPES.get(tid)
    if cls is None:
        raise ProtocolError("unknown-type", f"type byte {tid}")
    payload = blob[_HEADER.size :]
    if cls is FrameMessage:
        return FrameMessage(unpack_frame(payload))
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("bad-payload", str(exc)) from exc
    try:
        return _build(cls, doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise ProtocolError("bad-payload", str(exc)) from exc


# -- scene transitions --------------------------------------------------------


@dataclass(frozen=True)
class SessionContext:
    """Immutable per-session lookup data for applying control messages."""

    hierarchy: SegmentationHierarchy
    meshes: dict
    nav_params: "NavigationParams"


@dataclass(frozen=True)
class NavigationParams:
    v_max: float
    d0: float
    tau: float

    def __post_init__(self):
        if min(self.v_max, self.d0, self.tau) <= 0:
            raise ValueError("navigation parameters must be positive")


def navigation_speed(distance: float, params: NavigationParams) -> float:
    """Constant speed when far, exponential slowdown inside ``d0``."""
    d = max(float(distance), 0.0)
    if d >= params.d0:
        return params.v_max
    return params.v_max * float(np.exp((d - params.d0) / params.tau))


def _model_bounds_world(ctx: SessionContext, state: SceneState):
    los, his = [], []
    for mesh in ctx.meshes.values():
        b = mesh.bounds()
        if b is not None:
            los.append(b[0])
            his.append(b[1])
    if not los:
        return None
    lo = state.model_transform.to_world(np.min(los, axis=0))
    hi = state.model_transform.to_world(np.max(his, axis=0))
    return np.minimum(lo, hi), np.maximum(lo, hi)


def distance_to_model(ctx: SessionContext, state: SceneState) -> float:
    bounds = _model_bounds_world(ctx, state)
    if bounds is None:
        return float("inf")
    lo, hi = bounds
    p = state.camera.position
    delta = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return float(np.linalg.norm(delta))


_NAV_VECTORS = {
    "forward": ("fwd", 1.0),
    "backward": ("fwd", -1.0),
    "left": ("right", -1.0),
    "right": ("right", 1.0),
    "up": ("up", 1.0),
    "down": ("up", -1.0),
}


def step_navigation(
    state: SceneState, direction: str, dt: float, ctx: SessionContext
) -> SceneState:
    """Advance one integration step: the model moves opposite the command."""
    if direction not in _NAV_VECTORS:
        raise ValueError(f"unknown navigation direction {direction!r}")
    if dt <= 0.0:
        return state
    right, up, fwd = state.camera.basis()
    axis, sign = _NAV_VECTORS[direction]
    user_dir = {"right": right, "up": up, "fwd": fwd}[axis] * sign
    speed = navigation_speed(distance_to_model(ctx, state), ctx.nav_params)
    translation = state.model_transform.translation - user_dir * (speed * dt)
    return state.with_(
        model_transform=ModelTransform(state.model_transform.scale, translation)
    )


def apply_control(
    state: SceneState, msg: ControlMessage, ctx: SessionContext
) -> tuple[SceneState, list[DataMessage]]:
    """Pure scene transition; replies carry errors and pick results."""
    if isinstance(msg, SetCamera):
        try:
            cam = Camera(
                msg.position, msg.forward, msg.up, msg.vertical_fov,
                msg.width, msg.height, msg.ipd_mm,
            )
        except Exception as exc:
            return state, [ErrorMessage("bad-message", str(exc))]
        return state.with_(camera=cam), []

    if isinstance(msg, SetGaze):
        return state.with_(gaze=(float(msg.gx), float(msg.gy))), []

    if isinstance(msg, ToggleOrgan):
        pair = (msg.l1, msg.l2)
        if ctx.hierarchy.lookup(*pair) is None:
            return state, [ErrorMessage("bad-message", f"unknown organ {pair}")]
        selection = set(state.selection)
        selection.symmetric_difference_update({pair})
        return state.with_(selection=frozenset(selection)), []

    if isinstance(msg, SelectAllInSystem):
        pairs = ctx.hierarchy.pairs_in_system(msg.l1)
        return state.with_(selection=state.selection | frozenset(pairs)), []

    if isinstance(msg, DeselectAllInSystem):
        pairs = frozenset(ctx.hierarchy.pairs_in_system(msg.l1))
        return state.with_(selection=state.selection - pairs), []

    if isinstance(msg, SetClipPlane):
        try:
            clip = ClipPlane(np.asarray(msg.point), np.asarray(msg.normal), msg.enabled)
        except Exception as exc:
            return state, [ErrorMessage("bad-message", str(exc))]
        return state.with_(clip=clip), []

    if isinstance(msg, Navigate):
        if msg.direction not in NAV_DIRECTIONS:
            return state, [ErrorMessage("bad-message", f"direction {msg.direction!r}")]
        return _with_nav(state, msg.direction, msg.active), []

    if isinstance(msg, EnterBioscope):
        pair = (msg.l1, msg.l2)
        if pair not in state.selection:
            return state, [ErrorMessage("target-not-selected", f"{pair}")]
        # retargeting from inside the bioscope keeps the original pre-state
        pre = state.saved_state if state.mode == "bioscope" and state.saved_state else state
        new_state = bioscope_transform(state, pair, ctx.meshes.get(pair))
        if new_state is None:
            return state, [ErrorMessage("bioscope-empty-target", f"{pair}")]
        return new_state.with_(saved_state=pre), []

    if isinstance(msg, ExitBioscope):
        return exit_bioscope(state), []

    if isinstance(msg, SetReduction):
        if msg.k < 1.0:
            return state, [ErrorMessage("bad-message", f"reduction {msg.k}")]
        return state.with_(reduction=float(msg.k)), []

    if isinstance(msg, PickOrgan):
        # resolved by the server loop, which owns the renderer
        return state, []

    return state, [ErrorMessage("bad-message", f"unhandled {type(msg).__name__}")]


def _with_nav(state: SceneState, direction: str, active: bool) -> SceneState:
    current = set(state.nav_active)
    if active:
        current.add(direction)
    else:
        current.discard(direction)
    return state.with_(nav_active=frozenset(current))
