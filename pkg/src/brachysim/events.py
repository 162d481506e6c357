"""Append-only procedure event log with deterministic replay.

Every command (accepted or rejected), phase transition, trip, puncture and
seed placement is logged with a strictly increasing sequence number and the
simulation time it happened at. A finished run ends with a digest record;
``replay`` re-executes the logged commands against a fresh controller and
checks the final-state digest matches.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import DigestMismatch, ParseError, TruncatedLog


@dataclass(frozen=True)
class ProcedureEvent:
    seq: int
    t: float
    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "t": self.t, "kind": self.kind, "data": self.data},
            sort_keys=True,
            separators=(",", ":"),
        )


class EventLog:
    """Single-writer append-only list of ProcedureEvents."""

    def __init__(self):
        self._events: list[ProcedureEvent] = []

    def append(self, t: float, kind: str, data: dict[str, Any] | None = None) -> ProcedureEvent:
        ev = ProcedureEvent(seq=len(self._events), t=t, kind=kind, data=data or {})
        self._events.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self):
        return iter(self._events)

    @property
    def events(self) -> tuple[ProcedureEvent, ...]:
        return tuple(self._events)

    def to_ndjson(self) -> bytes:
        return ("\n".join(ev.to_json() for ev in self._events) + "\n").encode("utf-8") if self._events else b""


def parse_log(data: bytes | str) -> list[ProcedureEvent]:
    """Parse NDJSON log bytes, enforcing contiguous sequence numbers."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError("$", f"not valid UTF-8: {e}") from None
    events: list[ProcedureEvent] = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"line {lineno}", e.msg) from None
        if not isinstance(raw, dict) or not {"seq", "t", "kind", "data"} <= set(raw):
            raise ParseError(f"line {lineno}", "event must have seq, t, kind, data")
        events.append(ProcedureEvent(seq=raw["seq"], t=raw["t"], kind=raw["kind"], data=raw["data"]))
    for i, ev in enumerate(events):
        if ev.seq != i:
            raise TruncatedLog(f"sequence gap: expected seq {i}, found {ev.seq}")
    return events


def frame_digest(frame_doc: dict[str, Any]) -> str:
    """SHA-256 over the canonical JSON encoding of a telemetry frame."""
    blob = json.dumps(frame_doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def replay(log: bytes | str | Iterable[ProcedureEvent]) -> str:
    """Re-execute a recorded run and return its final-state digest.

    The log's load_plan command embeds the plan and the effective config, so
    the log is self-contained. Raises DigestMismatch when the recomputed
    digest differs from the recorded one, TruncatedLog when the log has a
    sequence gap or no terminal digest record.
    """
    from .config import SimConfig
    from .controller import Controller

    if isinstance(log, (bytes, str)):
        events = parse_log(log)
    else:
        events = list(log)
        for i, ev in enumerate(events):
            if ev.seq != i:
                raise TruncatedLog(f"sequence gap: expected seq {i}, found {ev.seq}")

    if not events:
        controller = Controller(SimConfig())
        return frame_digest(controller.frame().to_doc())

    if events[-1].kind != "digest":
        raise TruncatedLog("log does not end with a digest record")
    recorded = events[-1].data["sha256"]
    final_tick = int(events[-1].data["tick"])

    commands = [ev for ev in events if ev.kind == "command"]
    config = SimConfig()
    for ev in commands:
        if ev.data["cmd"] == "load_plan" and "config" in ev.data:
            config = SimConfig.from_snapshot(ev.data["config"])
            break
    controller = Controller(config)

    dt = config.dt
    for ev in commands:
        target_tick = int(round(ev.t / dt))
        while controller.tick_count < target_tick:
            controller.tick()
        args = dict(ev.data.get("args", {}))
        if ev.data["cmd"] == "load_plan":
            args["plan"] = ev.data.get("plan")
        controller.handle_command(ev.data["cmd"], args)
    while controller.tick_count < final_tick:
        controller.tick()

    digest = frame_digest(controller.frame().to_doc())
    if digest != recorded:
        raise DigestMismatch(f"recorded {recorded}, replayed {digest}")
    return digest
