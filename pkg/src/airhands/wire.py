"""Bit-exact message framing for the two video stream connections.

Every message is [u32 length][u8 msg_type][body], all integers
big-endian. ``length`` counts the bytes after the length field, so the
smallest legal value is 1 (a bare msg_type). Body layouts:

  HELLO     (1)  [u16 version][u8 role][u16 width][u16 height][u8 fps_target]
  HELLO_ACK (2)  [u8 accepted][u16 width][u16 height][u8 reason]
  FRAME     (3)  [u8 stream_id][u32 seq][u64 capture_ts][u32 payload_len][payload]
  HEARTBEAT (4)  [u64 ts]
  BYE       (5)  [u8 reason]

FRAME payloads are JPEG bytes, capped at 16 MiB. A connection that
produces a ProtocolError is abandoned (after a BYE reason=1); the stream
is never scanned for a resynchronization point.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING, Union

from .errors import EncodeError, ProtocolError

if TYPE_CHECKING:
    from .config import NodeConfig

__all__ = [
    "PROTOCOL_VERSION", "MAX_PAYLOAD", "Role", "MsgType",
    "Hello", "HelloAck", "FrameMsg", "Heartbeat", "Bye", "WireMessage",
    "encode_message", "decode_stream", "negotiate",
    "REJECT_VERSION", "REJECT_ROLE", "REJECT_RESOLUTION",
    "BYE_SHUTDOWN", "BYE_PROTOCOL_ERROR",
]

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 16 * 1024 * 1024

# HELLO_ACK rejection reasons
REJECT_VERSION = 1
REJECT_ROLE = 2
REJECT_RESOLUTION = 3

# BYE reasons
BYE_SHUTDOWN = 0
BYE_PROTOCOL_ERROR = 1


class Role(IntEnum):
    HELPER = 0
    WORKER = 1

    @property
    def complement(self) -> "Role":
        return Role.WORKER if self is Role.HELPER else Role.HELPER


class MsgType(IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    FRAME = 3
    HEARTBEAT = 4
    BYE = 5


@dataclass(frozen=True)
class Hello:
    version: int
    role: Role
    width: int
    height: int
    fps_target: int


@dataclass(frozen=True)
class HelloAck:
    accepted: int
    width: int
    height: int
    reason: int


@dataclass(frozen=True)
class FrameMsg:
    stream_id: int
    seq: int
    capture_ts: int
    payload: bytes


@dataclass(frozen=True)
class Heartbeat:
    ts: int


@dataclass(frozen=True)
class Bye:
    reason: int


WireMessage = Union[Hello, HelloAck, FrameMsg, Heartbeat, Bye]

_HEADER = struct.Struct(">IB")
_HELLO = struct.Struct(">HBHHB")
_HELLO_ACK = struct.Struct(">BHHB")
_FRAME_FIXED = struct.Struct(">BIQI")
_HEARTBEAT = struct.Struct(">Q")
_BYE = struct.Struct(">B")

_FRAME_OVERHEAD = 1 + _FRAME_FIXED.size  # msg_type + fixed FRAME fields
_MAX_LENGTH = MAX_PAYLOAD + _FRAME_OVERHEAD


def encode_message(msg: WireMessage) -> bytes:
    """Serialize a message, length prefix included."""
    if isinstance(msg, Hello):
        body = _HELLO.pack(msg.version, int(msg.role), msg.width, msg.height,
                           msg.fps_target)
        mtype = MsgType.HELLO
    elif isinstance(msg, HelloAck):
        body = _HELLO_ACK.pack(msg.accepted, msg.width, msg.height, msg.reason)
        mtype = MsgType.HELLO_ACK
    elif isinstance(msg, FrameMsg):
        if len(msg.payload) > MAX_PAYLOAD:
            raise EncodeError(
                f"frame payload {len(msg.payload)} exceeds {MAX_PAYLOAD} bytes")
        if msg.stream_id not in (0, 1, 2):
            raise EncodeError(f"invalid stream_id {msg.stream_id}")
        body = _FRAME_FIXED.pack(msg.stream_id, msg.seq, msg.capture_ts,
                                 len(msg.payload)) + msg.payload
        mtype = MsgType.FRAME
    elif isinstance(msg, Heartbeat):
        body = _HEARTBEAT.pack(msg.ts)
        mtype = MsgType.HEARTBEAT
    elif isinstance(msg, Bye):
        body = _BYE.pack(msg.reason)
        mtype = MsgType.BYE
    else:
        raise EncodeError(f"not a wire message: {type(msg).__name__}")
    return _HEADER.pack(1 + len(body), mtype) + body


def _decode_body(mtype: int, body: memoryview) -> WireMessage:
    if mtype == MsgType.HELLO:
        if len(body) != _HELLO.size:
            raise ProtocolError(f"HELLO body must be {_HELLO.size} bytes, got {len(body)}")
        version, role, width, height, fps = _HELLO.unpack(body)
        if role not in (0, 1):
            raise ProtocolError(f"HELLO role must be 0 or 1, got {role}")
        return Hello(version, Role(role), width, height, fps)
    if mtype == MsgType.HELLO_ACK:
        if len(body) != _HELLO_ACK.size:
            raise ProtocolError(
                f"HELLO_ACK body must be {_HELLO_ACK.size} bytes, got {len(body)}")
        return HelloAck(*_HELLO_ACK.unpack(body))
    if mtype == MsgType.FRAME:
        if len(body) < _FRAME_FIXED.size:
            raise ProtocolError("FRAME body shorter than fixed fields")
        stream_id, seq, ts, payload_len = _FRAME_FIXED.unpack_from(body)
        if stream_id not in (0, 1, 2):
            raise ProtocolError(f"FRAME stream_id must be 0..2, got {stream_id}")
        if payload_len != len(body) - _FRAME_FIXED.size:
            raise ProtocolError(
                f"FRAME payload_len {payload_len} inconsistent with body "
                f"({len(body) - _FRAME_FIXED.size} bytes after fixed fields)")
        return FrameMsg(stream_id, seq, ts, bytes(body[_FRAME_FIXED.size:]))
    if mtype == MsgType.HEARTBEAT:
        if len(body) != _HEARTBEAT.size:
            raise ProtocolError(
                f"HEARTBEAT body must be {_HEARTBEAT.size} bytes, got {len(body)}")
        return Heartbeat(_HEARTBEAT.unpack(body)[0])
    if mtype == MsgType.BYE:
        if len(body) != _BYE.size:
            raise ProtocolError(f"BYE body must be {_BYE.size} byte, got {len(body)}")
        return Bye(_BYE.unpack(body)[0])
    raise ProtocolError(f"unknown msg_type {mtype}")


def decode_stream(buffer: bytes | bytearray | memoryview) -> tuple[list[WireMessage], int]:
    """Greedily decode complete messages from the front of the buffer.

    Returns the decoded messages and how many bytes were consumed. A
    partial trailing message is left unconsumed (an entirely incomplete
    buffer yields ([], 0): feed more bytes and retry). Any malformed
    header or body raises ProtocolError; the caller must then abandon
    the connection (sending BYE reason=1).
    """
    view = memoryview(buffer)
    messages: list[WireMessage] = []
    offset = 0
    total = len(view)
    while True:
        if total - offset < _HEADER.size:
            break
        length, mtype = _HEADER.unpack_from(view, offset)
        if length < 1:
            raise ProtocolError(f"length field {length} < 1")
        if length > _MAX_LENGTH:
            raise ProtocolError(f"length field {length} exceeds cap {_MAX_LENGTH}")
        if mtype not in (1, 2, 3, 4, 5):
            raise ProtocolError(f"unknown msg_type {mtype}")
        end = offset + 4 + length
        if end > total:
            break  # partial body; wait for more bytes
        messages.append(_decode_body(mtype, view[offset + 5:end]))
        offset = end
    return messages, offset


def negotiate(local: "NodeConfig", remote_hello: WireMessage) -> HelloAck:
    """Listener-side handshake decision for an inbound HELLO.

    Accepts iff the protocol version matches, the remote role is the
    complement of the local role, and the resolutions are identical.
    The ACK always echoes the listener's own width and height. Rejection
    reasons are checked in that order.
    """
    if not isinstance(remote_hello, Hello):
        raise ProtocolError(
            f"handshake expects HELLO, got {type(remote_hello).__name__}")
    if remote_hello.version != PROTOCOL_VERSION:
        reason = REJECT_VERSION
    elif remote_hello.role != local.role.complement:
        reason = REJECT_ROLE
    elif (remote_hello.width, remote_hello.height) != (local.width, local.height):
        reason = REJECT_RESOLUTION
    else:
        reason = 0
    accepted = 1 if reason == 0 else 0
    return HelloAck(accepted=accepted, width=local.width, height=local.height,
                    reason=reason)
