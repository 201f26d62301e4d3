"""Binary message framing between the simulation service and viewers.

Every message is [u8 type][u32 payload length][payload], little-endian
throughout. The stream decoder is total: any byte sequence either yields
messages, waits for more input, or raises ProtocolError.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

PROTOCOL_VERSION = 1
HEADER = struct.Struct("<BI")
MAX_PAYLOAD = 1 << 28  # refuse absurd length prefixes

T_HELLO = 0
T_SCENE_INIT = 1
T_FRAME = 2
T_GRAB = 3
T_DRAG = 4
T_RELEASE = 5
T_SET_PARAM = 6
T_LIGHT = 7
T_ERROR = 8

PARAM_CODES = {"youngs": 0, "poisson": 1, "density": 2, "damping": 3}
PARAM_NAMES = {v: k for k, v in PARAM_CODES.items()}


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class SceneInit:
    splat_blob: bytes
    tetmesh_blob: bytes
    embedding_blob: bytes
    objects: tuple  # ((name, dynamic), ...) indexed by segment label


@dataclass(eq=False)
class Frame:
    frame_id: int
    positions: np.ndarray  # (N, 3) float32

    def __eq__(self, other):
        return (isinstance(other, Frame) and self.frame_id == other.frame_id
                and np.array_equal(self.positions, other.positions))


@dataclass(frozen=True)
class Grab:
    object_id: int
    point: tuple
    radius: float


@dataclass(frozen=True)
class Drag:
    target: tuple


@dataclass(frozen=True)
class Release:
    pass


@dataclass(frozen=True)
class SetParam:
    object_id: int
    param: int  # PARAM_CODES value
    value: float


@dataclass(frozen=True)
class LightMsg:
    direction: tuple
    strength: float


@dataclass(frozen=True)
class ErrorMsg:
    message: str


def _f32x3(values) -> bytes:
    return struct.pack("<3f", *(float(v) for v in values))


def encode(msg) -> bytes:
    """Message -> framed bytes."""
    if isinstance(msg, Hello):
        mtype, payload = T_HELLO, struct.pack("<H", msg.version)
    elif isinstance(msg, SceneInit):
        parts = []
        for blob in (msg.splat_blob, msg.tetmesh_blob, msg.embedding_blob):
            parts.append(struct.pack("<I", len(blob)))
            parts.append(blob)
        parts.append(struct.pack("<H", len(msg.objects)))
        for name, dynamic in msg.objects:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<B", 1 if dynamic else 0))
        mtype, payload = T_SCENE_INIT, b"".join(parts)
    elif isinstance(msg, Frame):
        pos = np.ascontiguousarray(msg.positions, dtype="<f4").reshape(-1, 3)
        mtype = T_FRAME
        payload = struct.pack("<Q", msg.frame_id) + pos.tobytes()
    elif isinstance(msg, Grab):
        mtype = T_GRAB
        payload = struct.pack("<I", msg.object_id) + _f32x3(msg.point) \
            + struct.pack("<f", msg.radius)
    elif isinstance(msg, Drag):
        mtype, payload = T_DRAG, _f32x3(msg.target)
    elif isinstance(msg, Release):
        mtype, payload = T_RELEASE, b""
    elif isinstance(msg, SetParam):
        if msg.param not in PARAM_NAMES:
            raise ProtocolError(f"unknown parameter code {msg.param}")
        mtype = T_SET_PARAM
        payload = struct.pack("<IBf", msg.object_id, msg.param, msg.value)
    elif isinstance(msg, LightMsg):
        mtype = T_LIGHT
        payload = _f32x3(msg.direction) + struct.pack("<f", msg.strength)
    elif isinstance(msg, ErrorMsg):
        mtype, payload = T_ERROR, msg.message.encode("utf-8")
    else:
        raise ProtocolError(f"cannot encode {type(msg).__name__}")
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError("payload too large")
    return HEADER.pack(mtype, len(payload)) + payload


def _need(payload, size, what):
    if len(payload) != size:
        raise ProtocolError(f"{what}: expected {size} payload bytes, "
                            f"got {len(payload)}")


def decode_payload(mtype: int, payload: bytes):
    """(type, payload bytes) -> message; raises ProtocolError."""
    if mtype == T_HELLO:
        _need(payload, 2, "hello")
        return Hello(version=struct.unpack("<H", payload)[0])
    if mtype == T_SCENE_INIT:
        view, off = payload, 0

        def take(n, what):
            nonlocal off
            if off + n > len(view):
                raise ProtocolError(f"scene init truncated in {what}")
            out = view[off:off + n]
            off += n
            return out

        blobs = []
        for what in ("splats", "tetmesh", "embedding"):
            (n,) = struct.unpack("<I", take(4, what))
            if n > MAX_PAYLOAD:
                raise ProtocolError(f"scene init: {what} blob too large")
            blobs.append(bytes(take(n, what)))
        (count,) = struct.unpack("<H", take(2, "object table"))
        objects = []
        for _ in range(count):
            (n,) = struct.unpack("<I", take(4, "object name"))
            if n > 4096:
                raise ProtocolError("scene init: object name too long")
            try:
                name = bytes(take(n, "object name")).decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ProtocolError(f"scene init: bad object name: {exc}") from None
            (flag,) = struct.unpack("<B", take(1, "object flag"))
            objects.append((name, bool(flag)))
        if off != len(view):
            raise ProtocolError("scene init: trailing bytes")
        return SceneInit(*blobs, objects=tuple(objects))
    if mtype == T_FRAME:
        if len(payload) < 8 or (len(payload) - 8) % 12 != 0:
            raise ProtocolError(f"frame: bad payload length {len(payload)}")
        (frame_id,) = struct.unpack("<Q", payload[:8])
        positions = np.frombuffer(payload[8:], dtype="<f4").reshape(-1, 3)
        return Frame(frame_id, positions.copy())
    if mtype == T_GRAB:
        _need(payload, 20, "grab")
        vals = struct.unpack("<I4f", payload)
        return Grab(vals[0], vals[1:4], vals[4])
    if mtype == T_DRAG:
        _need(payload, 12, "drag")
        return Drag(struct.unpack("<3f", payload))
    if mtype == T_RELEASE:
        _need(payload, 0, "release")
        return Release()
    if mtype == T_SET_PARAM:
        _need(payload, 9, "set param")
        obj, param, value = struct.unpack("<IBf", payload)
        if param not in PARAM_NAMES:
            raise ProtocolError(f"unknown parameter code {param}")
        return SetParam(obj, param, value)
    if mtype == T_LIGHT:
        _need(payload, 16, "light")
        vals = struct.unpack("<4f", payload)
        return LightMsg(vals[:3], vals[3])
    if mtype == T_ERROR:
        try:
            return ErrorMsg(payload.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"error message not utf-8: {exc}") from None
    raise ProtocolError(f"unknown message type {mtype}")


def decode(buffer: bytes):
    """-> (message, bytes consumed) or (None, 0) when more input is needed."""
    if len(buffer) < HEADER.size:
        return None, 0
    mtype, length = HEADER.unpack_from(buffer)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"declared payload of {length} bytes refused")
    end = HEADER.size + length
    if len(buffer) < end:
        return None, 0
    return decode_payload(mtype, bytes(buffer[HEADER.size:end])), end


@dataclass
class StreamDecoder:
    """Incremental decoder over an arbitrary chunking of the byte stream."""

    buffer: bytearray = field(default_factory=bytearray)

    def feed(self, data: bytes):
        self.buffer.extend(data)
        out = []
        while True:
            msg, used = decode(self.buffer)
            if msg is None:
                return out
            del self.buffer[:used]
            out.append(msg)
