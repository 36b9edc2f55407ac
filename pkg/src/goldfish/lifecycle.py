"""Actor lifecycle state machine.

Six phases, seven events, and a validated transition relation. The relation is
deliberately small and closed: `apply` either returns the unique successor or
raises IllegalTransition. TERMINATION is absorbing and CREATED is never
re-entered.

Phase and event names serialize as their uppercase ASCII names everywhere
(logs, state store, CLI output).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import IllegalTransition


class LifecyclePhase(Enum):
    CREATED = "CREATED"
    SUSPENDED = "SUSPENDED"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    ERROR = "ERROR"
    TERMINATION = "TERMINATION"

    def __str__(self) -> str:
        return self.value


class LifecycleEvent(Enum):
    INITIALIZED = "INITIALIZED"
    MESSAGE_ARRIVED = "MESSAGE_ARRIVED"
    PROCESSING_DONE = "PROCESSING_DONE"
    RETURN_TO_IDLE = "RETURN_TO_IDLE"
    FAILURE = "FAILURE"
    IDLE_TIMEOUT = "IDLE_TIMEOUT"
    SELF_DESTROY = "SELF_DESTROY"

    def __str__(self) -> str:
        return self.value


_P = LifecyclePhase
_E = LifecycleEvent

# The complete transition relation. Anything not listed is illegal.
_TRANSITIONS: frozenset[tuple[LifecyclePhase, LifecycleEvent, LifecyclePhase]] = frozenset(
    {
        (_P.CREATED, _E.INITIALIZED, _P.SUSPENDED),
        (_P.CREATED, _E.FAILURE, _P.ERROR),
        (_P.SUSPENDED, _E.MESSAGE_ARRIVED, _P.RUNNING),
        (_P.SUSPENDED, _E.IDLE_TIMEOUT, _P.TERMINATION),
        (_P.RUNNING, _E.PROCESSING_DONE, _P.COMPLETED),
        (_P.RUNNING, _E.FAILURE, _P.ERROR),
        (_P.COMPLETED, _E.RETURN_TO_IDLE, _P.SUSPENDED),
        (_P.ERROR, _E.SELF_DESTROY, _P.TERMINATION),
    }
)

_SUCCESSOR: dict[tuple[LifecyclePhase, LifecycleEvent], LifecyclePhase] = {
    (phase, event): nxt for phase, event, nxt in _TRANSITIONS
}


def legal_transitions() -> frozenset[tuple[LifecyclePhase, LifecycleEvent, LifecyclePhase]]:
    """Return the full (phase, event, successor) relation."""
    return _TRANSITIONS


def successor(phase: LifecyclePhase, event: LifecycleEvent) -> Optional[LifecyclePhase]:
    """Successor phase for (phase, event), or None if the pair is illegal."""
    return _SUCCESSOR.get((phase, event))


@dataclass
class TransitionRecord:
    """One audit entry: wall-clock stamped, monotonic time kept for ordering."""

    phase: LifecyclePhase
    event: LifecycleEvent
    next_phase: LifecyclePhase
    wall_time: float
    mono_time: float


@dataclass
class LifecycleConfig:
    """User-tunable lifecycle knobs.

    suspend_timeout: seconds an actor may stay SUSPENDED before it terminates.
    """

    suspend_timeout: float = 30.0

    def validate(self) -> None:
        if self.suspend_timeout <= 0:
            raise ValueError("suspend_timeout must be > 0")


@dataclass
class LifecycleMachine:
    """Per-actor phase tracker with an audit trail.

    All `apply` calls for one actor go through its single logical owner; this
    object is not itself thread-safe.
    """

    phase: LifecyclePhase = LifecyclePhase.CREATED
    history: list[TransitionRecord] = field(default_factory=list)

    def apply(self, event: LifecycleEvent) -> LifecyclePhase:
        self.phase = apply(self.phase, event, self.history)
        return self.phase

    def visits(self, phase: LifecyclePhase) -> int:
        """How many times `phase` has been entered."""
        n = sum(1 for rec in self.history if rec.next_phase is phase)
        if phase is LifecyclePhase.CREATED:
            n += 1  # initial phase, not entered via an event
        return n


def apply(
    phase: LifecyclePhase,
    event: LifecycleEvent,
    audit: Optional[list[TransitionRecord]] = None,
) -> LifecyclePhase:
    """Return the successor of (phase, event) or raise IllegalTransition.

    When `audit` is given the transition is recorded with both wall-clock and
    monotonic timestamps.
    """
    nxt = _SUCCESSOR.get((phase, event))
    if nxt is None:
        raise IllegalTransition(phase, event)
    if audit is not None:
        audit.append(TransitionRecord(phase, event, nxt, time.time(), time.monotonic()))
    return nxt


def idle_timeout_due(last_activity_mono: float, config: LifecycleConfig, now_mono: Optional[float] = None) -> bool:
    """True when a SUSPENDED actor's idle time has reached suspend_timeout.

    Timeout arithmetic uses the monotonic clock only.
    """
    now = time.monotonic() if now_mono is None else now_mono
    return now - last_activity_mono >= config.suspend_timeout


def on_idle_timeout(phase: LifecyclePhase, last_activity_mono: float, config: LifecycleConfig,
                    now_mono: Optional[float] = None) -> LifecyclePhase:
    """Apply IDLE_TIMEOUT for an actor whose suspend window has elapsed.

    Raises IllegalTransition when the actor is not SUSPENDED (a racing message
    wins; the caller must abort the timeout) and ValueError when the idle
    window has not actually elapsed. The caller is responsible for committing
    the result via the state store's compare-and-set and for emitting the
    deregistration toward middleware.
    """
    if phase is not LifecyclePhase.SUSPENDED:
        raise IllegalTransition(phase, LifecycleEvent.IDLE_TIMEOUT)
    if not idle_timeout_due(last_activity_mono, config, now_mono):
        raise ValueError("suspend_timeout has not elapsed; timer must re-arm")
    return apply(phase, LifecycleEvent.IDLE_TIMEOUT)
