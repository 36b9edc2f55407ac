"""Length-prefixed binary frame protocol and record encodings.

Frame layout (all integers little-endian)::

    u32 frame_len | u8 frame_type | body

frame_len counts the type byte plus the body. Frame types::

    0=MSG, 1=BLOCK, 2=UNBLOCK, 3=REGISTER, 4=DEREGISTER, 5=ACK, 6=ERR

MSG body::

    message_id 16B | u8 target_kind | u16 target_len | target
    | u8 hop_count | u32 payload_len | payload

Other bodies are platform-internal. Stored records (ActorRef, BlockRecord,
RegistryEntry) reuse the same little-endian field encoding so one codec
serves the store, the sockets, and the golden tests.
"""

from __future__ import annotations

import socket
import struct
from typing import Optional, Tuple

from .errors import WireError
from .lifecycle import LifecyclePhase
from .types import ActorRef, BlockRecord, Directive, Message, RegistryEntry

FRAME_MSG = 0
FRAME_BLOCK = 1
FRAME_UNBLOCK = 2
FRAME_REGISTER = 3
FRAME_DEREGISTER = 4
FRAME_ACK = 5
FRAME_ERR = 6

_FRAME_TYPES = frozenset(range(7))

# Default cap on one frame's payload; PayloadTooLarge guards above this.
MAX_FRAME_LEN = 64 * 1024 * 1024

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")


class _Reader:
    """Cursor over one frame body; raises WireError on truncation."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise WireError(f"truncated record: wanted {n} bytes at {self.pos}")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def blob16(self) -> bytes:
        return self.take(self.u16())

    def blob32(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise WireError(f"{len(self.buf) - self.pos} trailing bytes in record")


def _blob16(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise WireError("field exceeds u16 length prefix")
    return _U16.pack(len(data)) + data


def _blob32(data: bytes) -> bytes:
    if len(data) > 0xFFFFFFFF:
        raise WireError("field exceeds u32 length prefix")
    return _U32.pack(len(data)) + data


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

def encode_frame(frame_type: int, body: bytes) -> bytes:
    if frame_type not in _FRAME_TYPES:
        raise WireError(f"unknown frame type {frame_type}")
    if 1 + len(body) > MAX_FRAME_LEN:
        raise WireError("frame exceeds MAX_FRAME_LEN")
    return _U32.pack(1 + len(body)) + _U8.pack(frame_type) + body


def decode_frame(data: bytes) -> Tuple[int, bytes, int]:
    """Decode one frame from the head of `data`.

    Returns (frame_type, body, bytes_consumed). Raises WireError when the
    buffer holds a malformed frame; a short buffer raises too, so callers
    buffering from a socket should use read_frame instead.
    """
    if len(data) < 5:
        raise WireError("short frame header")
    (frame_len,) = _U32.unpack(data[:4])
    if frame_len < 1 or frame_len > MAX_FRAME_LEN:
        raise WireError(f"bad frame length {frame_len}")
    end = 4 + frame_len
    if len(data) < end:
        raise WireError("truncated frame body")
    frame_type = data[4]
    if frame_type not in _FRAME_TYPES:
        raise WireError(f"unknown frame type {frame_type}")
    return frame_type, data[5:end], end


def encode_message_body(msg: Message) -> bytes:
    from .types import actor_id_bytes

    if msg.target_kind == 0:
        target = actor_id_bytes(msg.target)
    else:
        target = msg.target.encode("utf-8")
    return b"".join(
        (
            msg.message_id,
            _U8.pack(msg.target_kind),
            _blob16(target),
            _U8.pack(msg.hop_count),
            _blob32(msg.payload),
        )
    )


def decode_message_body(body: bytes) -> Message:
    from .types import actor_id_from_bytes

    r = _Reader(body)
    message_id = r.take(16)
    target_kind = r.u8()
    raw_target = r.blob16()
    if target_kind == 0:
        if len(raw_target) != 16:
            raise WireError("actor-id target must be 16 bytes")
        target = actor_id_from_bytes(raw_target)
    elif target_kind == 1:
        target = raw_target.decode("utf-8")
    else:
        raise WireError(f"unknown target kind {target_kind}")
    hop_count = r.u8()
    payload = r.blob32()
    r.done()
    return Message(message_id, target_kind, target, payload, hop_count=hop_count)


# ---------------------------------------------------------------------------
# Stored records
# ---------------------------------------------------------------------------

_PHASE_CODE = {p: i for i, p in enumerate(LifecyclePhase)}
_PHASE_FROM = {i: p for p, i in _PHASE_CODE.items()}


def encode_actor_ref(ref: ActorRef) -> bytes:
    from .types import actor_id_bytes

    return b"".join(
        (
            actor_id_bytes(ref.actor_id),
            _U8.pack(_PHASE_CODE[ref.phase]),
            _U8.pack(1 if ref.blocked else 0),
            _U8.pack(int(ref.last_directive)),
            _blob16(ref.handler_name.encode("utf-8")),
            _blob16(ref.node.encode("utf-8")),
            _blob16(ref.channel_id.encode("utf-8")),
            _F64.pack(ref.last_activity),
        )
    )


def decode_actor_ref(data: bytes) -> ActorRef:
    from .types import actor_id_from_bytes

    r = _Reader(data)
    actor_id = actor_id_from_bytes(r.take(16))
    phase = _PHASE_FROM.get(r.u8())
    if phase is None:
        raise WireError("bad phase code")
    blocked = r.u8() != 0
    directive = Directive(r.u8())
    handler = r.blob16().decode("utf-8")
    node = r.blob16().decode("utf-8")
    channel = r.blob16().decode("utf-8")
    last_activity = r.f64()
    r.done()
    return ActorRef(actor_id, handler, phase, node, channel, blocked, directive, last_activity)


def encode_block_record(rec: BlockRecord) -> bytes:
    from .types import actor_id_bytes

    return actor_id_bytes(rec.actor_id) + _U8.pack(1 if rec.blocked else 0)


def decode_block_record(data: bytes) -> BlockRecord:
    from .types import actor_id_from_bytes

    r = _Reader(data)
    actor_id = actor_id_from_bytes(r.take(16))
    blocked = r.u8() != 0
    r.done()
    return BlockRecord(actor_id, blocked)


def encode_registry_entry(entry: RegistryEntry) -> bytes:
    return b"".join(
        (
            _blob16(entry.node.encode("utf-8")),
            _F64.pack(entry.registered_at),
            _F64.pack(entry.last_heartbeat),
        )
    )


def decode_registry_entry(data: bytes) -> RegistryEntry:
    r = _Reader(data)
    node = r.blob16().decode("utf-8")
    registered_at = r.f64()
    last_heartbeat = r.f64()
    r.done()
    return RegistryEntry(node, registered_at, last_heartbeat)


# ---------------------------------------------------------------------------
# Socket framing
# ---------------------------------------------------------------------------

def write_frame(sock: socket.socket, frame_type: int, body: bytes) -> None:
    sock.sendall(encode_frame(frame_type, body))


def read_frame(sock: socket.socket) -> Optional[Tuple[int, bytes]]:
    """Read exactly one frame; None on clean EOF at a frame boundary."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (frame_len,) = _U32.unpack(header)
    if frame_len < 1 or frame_len > MAX_FRAME_LEN:
        raise WireError(f"bad frame length {frame_len}")
    rest = _read_exact(sock, frame_len)
    if rest is None:
        raise WireError("connection closed mid-frame")
    frame_type = rest[0]
    if frame_type not in _FRAME_TYPES:
        raise WireError(f"unknown frame type {frame_type}")
    return frame_type, rest[1:]


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    """Read n bytes; None on EOF before the first byte, WireError mid-way."""
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(n - got)
        except OSError:
            chunk = b""
        if not chunk:
            if got == 0:
                return None
            raise WireError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)
