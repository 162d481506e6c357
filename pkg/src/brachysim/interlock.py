"""Mechanical safety release between the insertion drive and needle carriage.

A spring-loaded ball plunger couples the motorized ball screw to the
carriage. When the axial needle force exceeds the plunger's release
threshold the coupling lets go: the drive can no longer advance the needle,
and the carriage is free for manual retraction. Re-engagement requires the
carriage back at its home position.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import NotAtHome, NotPermitted


class EngagementStatus(enum.Enum):
    ENGAGED = "ENGAGED"
    TRIPPED = "TRIPPED"


@dataclass
class EngagementState:
    status: EngagementStatus = EngagementStatus.ENGAGED
    release_threshold: float = 8.0  # N; must exceed the configured puncture force
    trip_force: float | None = None

    def __post_init__(self):
        if self.release_threshold <= 0:
            raise ValueError("release_threshold must be positive")


@dataclass(frozen=True)
class TripEvent:
    force: float
    threshold: float


def update(state: EngagementState, axial_force: float) -> TripEvent | None:
    """Feed one force sample; trips strictly above the threshold.

    TRIPPED is absorbing: further samples (including zero) leave it tripped
    until rehome().
    """
    if axial_force < 0:
        raise ValueError("axial_force must be non-negative")
    if state.status is EngagementStatus.ENGAGED and axial_force > state.release_threshold:
        state.status = EngagementStatus.TRIPPED
        state.trip_force = axial_force
        return TripEvent(force=axial_force, threshold=state.release_threshold)
    return None


def manual_retract(state: EngagementState, d_ins: float, amount: float, emergency: bool = False) -> float:
    """Hand-retract the needle carriage by ``amount`` mm, flooring at home.

    Only permitted once the release has tripped, or under emergency manual
    control; the motor is not involved.
    """
    if amount < 0:
        raise ValueError("amount must be non-negative")
    if state.status is not EngagementStatus.TRIPPED and not emergency:
        raise NotPermitted("manual retraction requires a tripped release or emergency manual mode")
    return max(0.0, d_ins - amount)


def rehome(state: EngagementState, d_ins: float) -> None:
    """Re-seat the plunger. Requires the carriage fully retracted (d_ins = 0).

    Idempotent when already engaged. The trip force is cleared here; the trip
    itself stays in the procedure log.
    """
    if d_ins > 0:
        raise NotAtHome(f"needle carriage at {d_ins:.3f} mm; retract fully before re-engaging")
    state.status = EngagementStatus.ENGAGED
    state.trip_force = None
