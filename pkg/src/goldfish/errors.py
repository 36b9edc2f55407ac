"""Exception hierarchy for the GoldFish platform.

Every error that crosses a module boundary is a subclass of GoldfishError so
callers can catch platform faults without swallowing programming errors.
"""

from __future__ import annotations


class GoldfishError(Exception):
    """Base class for all platform errors."""


class IllegalTransition(GoldfishError):
    """A lifecycle event was applied to a phase with no legal successor.

    Signals a protocol bug in the caller; never silently ignored.
    """

    def __init__(self, phase, event):
        super().__init__(f"no legal transition from {phase} on {event}")
        self.phase = phase
        self.event = event


class ModuleInvalid(GoldfishError):
    """Sandbox module is malformed or missing a required export."""


class GuestTrap(GoldfishError):
    """Guest execution faulted inside the sandbox."""


class GuestTimeout(GoldfishError):
    """Guest exceeded its maximum execution duration."""


class OutOfMemory(GoldfishError):
    """Guest exceeded its memory limit."""


class PayloadTooLarge(GoldfishError):
    """Message payload exceeds the configured frame limit."""


class ActorTerminated(GoldfishError):
    """Operation addressed an actor that already reached TERMINATION."""


class ActorVanished(GoldfishError):
    """Actor terminated between routing and dispatch; message must re-route."""


class NoRoute(GoldfishError):
    """No actor, no willing actor, and no buffer with free capacity."""


class HopLimitExceeded(GoldfishError):
    """Message exceeded max_hops while being rejected and forwarded."""


class CapacityExceeded(GoldfishError):
    """Node buffer has no free message slot."""


class SpawnFailed(GoldfishError):
    """Dispatcher could not create a fresh actor."""


class CasConflict(GoldfishError):
    """Compare-and-set failed: presented version is stale."""

    def __init__(self, key: str, expected: int, current: int):
        super().__init__(f"cas conflict on {key!r}: expected v{expected}, at v{current}")
        self.key = key
        self.expected = expected
        self.current = current


class NotFound(GoldfishError):
    """Key absent from the state store."""


class UnknownActor(GoldfishError):
    """Deregistration or lookup of an actor id with no record (tolerated, logged)."""


class AlreadyBlocked(GoldfishError):
    """block() called while the block record is already set."""


class AlreadyUnblocked(GoldfishError):
    """unblock() called while the block record is already clear."""


class ConfigInvalid(GoldfishError):
    """Node or workload configuration failed validation."""


class WireError(GoldfishError):
    """Frame or record decoding failed."""


class InvokeTimeout(GoldfishError):
    """Caller-side wait for a reply expired."""


class BenchAborted(GoldfishError):
    """A benchmark request exceeded the global timeout."""
