"""Framed wire protocol and the bounded frame cache (data scheduler).

Wire layout: magic "SCL1", kind byte, u32 LE payload length, payload.
Only FRAME messages carry a payload: step_index, dx, dy, dz as u32 LE
followed by dx*dy*dz float32 LE voxels in z-fastest order. The scheduler
is a FIFO cache of decoded frames; it emits PAUSE when a push fills it to
capacity and RESUME on the drain that empties it again.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    EmptyCacheError,
    IncompleteMessageError,
    ProtocolError,
    SchedulerOverflowError,
)
from .fieldsim import FieldFrame

MAGIC = b"SCL1"
_HEADER = struct.Struct("<4sBI")
_FRAME_META = struct.Struct("<IIII")


class MessageKind(IntEnum):
    HELLO = 0
    FRAME = 1
    PAUSE = 2
    RESUME = 3
    END = 4


@dataclass(frozen=True)
class StreamMessage:
    kind: MessageKind
    frame: FieldFrame | None = None

    def __post_init__(self) -> None:
        if (self.kind == MessageKind.FRAME) != (self.frame is not None):
            raise ProtocolError("FRAME messages carry a frame; control messages do not")


def frame_message(frame: FieldFrame) -> StreamMessage:
    return StreamMessage(MessageKind.FRAME, frame)


def control_message(kind: MessageKind) -> StreamMessage:
    return StreamMessage(kind)


def encode_message(msg: StreamMessage) -> bytes:
    if msg.kind == MessageKind.FRAME:
        frame = msg.frame
        values = np.ascontiguousarray(frame.values, dtype="<f4")
        if not np.all(np.isfinite(values)):
            raise ProtocolError("cannot encode non-finite frame values")
        payload = _FRAME_META.pack(frame.step_index, *frame.dims) + values.tobytes()
    else:
        payload = b""
    return _HEADER.pack(MAGIC, int(msg.kind), len(payload)) + payload


def _parse_one(buf: bytes | bytearray | memoryview, offset: int) -> tuple[StreamMessage, int]:
    """Parse one message starting at offset; return (message, next offset)."""
    view = memoryview(buf)
    if len(view) - offset < _HEADER.size:
        raise IncompleteMessageError("truncated header")
    magic, kind_byte, payload_len = _HEADER.unpack_from(view, offset)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {bytes(magic)!r}")
    try:
        kind = MessageKind(kind_byte)
    except ValueError:
        raise ProtocolError(f"unknown message kind {kind_byte}") from None
    body_start = offset + _HEADER.size
    if len(view) - body_start < payload_len:
        raise IncompleteMessageError("truncated payload")
    if kind != MessageKind.FRAME:
        if payload_len != 0:
            raise ProtocolError(f"{kind.name} message must have empty payload")
        return StreamMessage(kind), body_start
    if payload_len < _FRAME_META.size:
        raise ProtocolError("FRAME payload shorter than its fixed fields")
    step_index, dx, dy, dz = _FRAME_META.unpack_from(view, body_start)
    n = dx * dy * dz
    if payload_len != _FRAME_META.size + 4 * n:
        raise ProtocolError(
            f"FRAME payload length {payload_len} does not match dims ({dx}, {dy}, {dz})"
        )
    raw = view[body_start + _FRAME_META.size : body_start + payload_len]
    values = np.frombuffer(raw, dtype="<f4").reshape(dx, dy, dz).copy()
    frame = FieldFrame(step_index=step_index, dims=(dx, dy, dz), values=values)
    return StreamMessage(MessageKind.FRAME, frame), body_start + payload_len


def decode_message(buf: bytes) -> StreamMessage:
    """Decode exactly one message occupying the whole buffer."""
    msg, end = _parse_one(buf, 0)
    if end != len(buf):
        raise ProtocolError(f"{len(buf) - end} trailing bytes after message")
    return msg


class MessageReader:
    """Incremental decoder for a byte stream of concatenated messages."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def next_message(self) -> StreamMessage | None:
        if not self._buf:
            return None
        try:
            msg, end = _parse_one(self._buf, 0)
        except IncompleteMessageError:
            return None
        del self._buf[:end]
        return msg


@dataclass
class Scheduler:
    """Single-owner FIFO cache between the stream and the trainer."""

    capacity: int
    cache: list[FieldFrame] = field(default_factory=list)
    producer_paused: bool = False
    frames_seen: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ProtocolError(f"cache capacity must be >= 1, got {self.capacity}")

    @property
    def is_full(self) -> bool:
        return len(self.cache) >= self.capacity

    def push(self, frame: FieldFrame) -> MessageKind | None:
        """Append a frame; returns PAUSE when this push fills the cache."""
        if len(self.cache) >= self.capacity:
            raise SchedulerOverflowError("push on a full cache (producer should be paused)")
        self.cache.append(frame)
        self.frames_seen += 1
        if len(self.cache) == self.capacity:
            self.producer_paused = True
            return MessageKind.PAUSE
        return None

    def drain(self) -> tuple[list[FieldFrame], MessageKind | None]:
        """Hand over all cached frames in arrival order; RESUME if the producer was paused."""
        if not self.cache:
            raise EmptyCacheError("drain on an empty cache")
        frames = self.cache
        self.cache = []
        if self.producer_paused:
            self.producer_paused = False
            return frames, MessageKind.RESUME
        return frames, None
