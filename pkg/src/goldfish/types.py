"""Shared domain records: actor ids, messages, directives, registry rows.

ActorId is a 16-byte UUID; its canonical text form is lowercase hex with
hyphens. Message ids are raw 16-byte tokens, unique within a run.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional

from .lifecycle import LifecyclePhase

# Target kinds on the wire and in the guest ABI.
TARGET_ACTOR_ID = 0
TARGET_HANDLER_NAME = 1

DEFAULT_MAX_HOPS = 8


class Directive(IntEnum):
    """Actor's instruction about future messages. Wire values are pinned."""

    ACCEPT_NEXT = 0
    HOLD = 1
    REJECT = 2


def new_actor_id() -> str:
    """Fresh globally-unique actor id in canonical text form."""
    return str(uuid.uuid4())


def actor_id_bytes(actor_id: str) -> bytes:
    return uuid.UUID(actor_id).bytes


def actor_id_from_bytes(raw: bytes) -> str:
    return str(uuid.UUID(bytes=raw))


def new_message_id() -> bytes:
    return uuid.uuid4().bytes


@dataclass
class Message:
    """Message envelope.

    target_kind selects how `target` is interpreted: an actor id in canonical
    text form, or a handler name (spawn-by-name). Timestamps are monotonic and
    never travel on the wire.
    """

    message_id: bytes
    target_kind: int
    target: str
    payload: bytes
    reply_to: Optional[str] = None
    hop_count: int = 0
    t_ingress: float = 0.0
    t_dispatch: float = 0.0

    @classmethod
    def to_actor(cls, actor_id: str, payload: bytes, **kw) -> "Message":
        return cls(new_message_id(), TARGET_ACTOR_ID, actor_id, payload, **kw)

    @classmethod
    def to_handler(cls, name: str, payload: bytes, **kw) -> "Message":
        return cls(new_message_id(), TARGET_HANDLER_NAME, name, payload, **kw)

    def hopped(self) -> "Message":
        """Copy with hop_count incremented (reject/forward path)."""
        return replace(self, hop_count=self.hop_count + 1)

    @property
    def id_hex(self) -> str:
        return self.message_id.hex()


@dataclass
class ActorRef:
    """Registry record for one live actor instance."""

    actor_id: str
    handler_name: str
    phase: LifecyclePhase
    node: str
    channel_id: str
    blocked: bool = False
    last_directive: Directive = Directive.ACCEPT_NEXT
    last_activity: float = field(default_factory=time.monotonic)


@dataclass
class BlockRecord:
    """Middleware-side record of the single-message-in-flight block."""

    actor_id: str
    blocked: bool


@dataclass
class RegistryEntry:
    """One live middleware node known to the registry."""

    node: str
    registered_at: float
    last_heartbeat: float


def channel_id_for(actor_id: str) -> str:
    return "ch-" + actor_id
