"""Guest module contract: byte encodings crossing the sandbox boundary.

The host writes input at the pointer returned by ``gf_alloc``::

    u32 state_len | state bytes | u32 payload_len | payload bytes

``gf_handle(in_ptr, in_len) -> i64`` packs its result as
(out_ptr << 32) | out_len. The output record at out_ptr::

    u8 directive (0=ACCEPT_NEXT, 1=HOLD, 2=REJECT)
    | u32 new_state_len | new_state
    | u32 output_len | output
    | u16 outbound_count
    | repeated { u8 target_kind (0=actor_id, 1=handler_name)
                 | u16 target_len | target
                 | u32 payload_len | payload }

All integers little-endian. Guests may import ``env.gf_log(ptr, len)`` for
diagnostics only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import WireError
from .types import Directive

GUEST_ALLOC = "gf_alloc"
GUEST_HANDLE = "gf_handle"
HOST_MODULE = "env"
HOST_LOG = "gf_log"

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@dataclass
class OutboundSend:
    """One actor-to-actor send produced during an invocation."""

    target_kind: int  # 0=actor_id, 1=handler_name
    target: str
    payload: bytes


@dataclass
class GuestResult:
    """Decoded gf_handle output record."""

    directive: Directive = Directive.ACCEPT_NEXT
    new_state: bytes = b""
    output: bytes = b""
    outbound: list[OutboundSend] = field(default_factory=list)


def encode_guest_input(state: bytes, payload: bytes) -> bytes:
    return _U32.pack(len(state)) + state + _U32.pack(len(payload)) + payload


def decode_guest_input(data: bytes) -> tuple[bytes, bytes]:
    """Inverse of encode_guest_input; used by tests and host-side checks."""
    if len(data) < 4:
        raise WireError("short guest input")
    (state_len,) = _U32.unpack_from(data, 0)
    pos = 4 + state_len
    if pos + 4 > len(data):
        raise WireError("truncated guest input state")
    state = data[4:pos]
    (payload_len,) = _U32.unpack_from(data, pos)
    payload = data[pos + 4 : pos + 4 + payload_len]
    if len(payload) != payload_len or pos + 4 + payload_len != len(data):
        raise WireError("truncated guest input payload")
    return state, payload


def encode_guest_output(result: GuestResult) -> bytes:
    from .types import actor_id_bytes

    parts = [
        bytes([int(result.directive)]),
        _U32.pack(len(result.new_state)),
        result.new_state,
        _U32.pack(len(result.output)),
        result.output,
        _U16.pack(len(result.outbound)),
    ]
    for send in result.outbound:
        if send.target_kind == 0:
            target = actor_id_bytes(send.target)
        else:
            target = send.target.encode("utf-8")
        parts.append(bytes([send.target_kind]))
        parts.append(_U16.pack(len(target)))
        parts.append(target)
        parts.append(_U32.pack(len(send.payload)))
        parts.append(send.payload)
    return b"".join(parts)


def decode_guest_output(data: bytes) -> GuestResult:
    from .types import actor_id_from_bytes

    view = memoryview(data)
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(view):
            raise WireError("truncated guest output")
        out = bytes(view[pos : pos + n])
        pos += n
        return out

    directive_code = take(1)[0]
    try:
        directive = Directive(directive_code)
    except ValueError:
        raise WireError(f"bad directive byte {directive_code}") from None
    (state_len,) = _U32.unpack(take(4))
    new_state = take(state_len)
    (output_len,) = _U32.unpack(take(4))
    output = take(output_len)
    (count,) = _U16.unpack(take(2))
    outbound = []
    for _ in range(count):
        kind = take(1)[0]
        (target_len,) = _U16.unpack(take(2))
        raw = take(target_len)
        if kind == 0:
            if target_len != 16:
                raise WireError("actor-id target must be 16 bytes")
            target = actor_id_from_bytes(raw)
        elif kind == 1:
            target = raw.decode("utf-8")
        else:
            raise WireError(f"unknown outbound target kind {kind}")
        (payload_len,) = _U32.unpack(take(4))
        payload = take(payload_len)
        outbound.append(OutboundSend(kind, target, payload))
    if pos != len(view):
        raise WireError(f"{len(view) - pos} trailing bytes in guest output")
    return GuestResult(directive, new_state, output, outbound)
