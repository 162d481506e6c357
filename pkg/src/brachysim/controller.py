"""Procedure state machine and fixed-step simulation core.

A single logical owner advances the controller by calling tick() at the
configured fixed step (1 ms by default); external callers interact only by
applying commands between ticks and reading immutable telemetry snapshots.
Command legality per phase is defined by the shipped transition table
(data/transitions.json); everything the controller does lands in the
append-only event log, and identical inputs produce bit-identical logs.

Per-needle cycle: position the carriages and preposition the guide, insert
with the task's speed/rotation profile, open the hub at depth, confirm the
seeds, re-clamp, retract. The mechanical release is fed the modulated axial
force every tick; a trip freezes the insertion drive until the needle is
manually retracted and the release re-homed.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Any, Callable

from . import interlock, tissue
from .config import SimConfig
from .errors import NoAccess, NotAtHome, NotPermitted, RunFailure, TravelExceeded
from .events import EventLog, frame_digest
from .kinematics import JointState, NeedlePose, ik_position, needle_direction, quantize
from .plan import EffectiveNeedle, MotionProfile, Plan, parse_plan, plan_doc
from .workspace import plan_access


class Phase(enum.Enum):
    IDLE = "IDLE"
    PLAN_LOADED = "PLAN_LOADED"
    POSITIONING = "POSITIONING"
    PREPOSITIONED = "PREPOSITIONED"
    INSERTING = "INSERTING"
    AT_DEPTH = "AT_DEPTH"
    HUB_OPEN = "HUB_OPEN"
    SEED_PLACED = "SEED_PLACED"
    RETRACTING = "RETRACTING"
    NEEDLE_DONE = "NEEDLE_DONE"
    SAFETY_TRIPPED = "SAFETY_TRIPPED"
    EMERGENCY_MANUAL = "EMERGENCY_MANUAL"
    COMPLETE = "COMPLETE"


class Hub(enum.Enum):
    CLAMPED = "CLAMPED"
    OPEN = "OPEN"


def load_transition_table() -> dict[str, Any]:
    with resources.files("brachysim").joinpath("data/transitions.json").open("rb") as f:
        return json.load(f)


_TABLE = load_transition_table()
COMMANDS = tuple(_TABLE["commands"])
_ACCEPT = {phase: frozenset(cmds) for phase, cmds in _TABLE["accept"].items()}
_REASONS = dict(_TABLE["reject_reasons"])

_LINEAR_JOINTS = ("xf", "yf", "xr", "yr", "z_pre", "d_ins")


@dataclass(frozen=True)
class CommandResult:
    ok: bool
    reason: str | None = None


@dataclass(frozen=True)
class TelemetryFrame:
    tick: int
    sim_time: float
    phase: str
    joints: JointState
    entry_x: float
    entry_y: float
    pitch: float
    yaw: float
    tip: tuple[float, float, float]
    tip_depth: float
    axial_force: float
    peak_force: float
    prostate_displacement: float
    engagement: str
    trip_force: float | None
    release_threshold: float
    hub: str
    needle_id: str | None
    punctured: bool

    def to_doc(self) -> dict[str, Any]:
        j = self.joints
        return {
            "tick": self.tick,
            "sim_time": self.sim_time,
            "phase": self.phase,
            "joints": {
                "xf": j.xf, "yf": j.yf, "xr": j.xr, "yr": j.yr,
                "z_pre": j.z_pre, "d_ins": j.d_ins, "theta": j.theta,
            },
            "pose": {"entry_x": self.entry_x, "entry_y": self.entry_y, "pitch": self.pitch, "yaw": self.yaw},
            "tip": list(self.tip),
            "tip_depth": self.tip_depth,
            "axial_force": self.axial_force,
            "peak_force": self.peak_force,
            "prostate_displacement": self.prostate_displacement,
            "engagement": self.engagement,
            "trip_force": self.trip_force,
            "release_threshold": self.release_threshold,
            "hub": self.hub,
            "needle_id": self.needle_id,
            "punctured": self.punctured,
        }


@dataclass
class _ActiveNeedle:
    eff: EffectiveNeedle
    pose: NeedlePose
    depth: float           # tip advance past the template plane, along the needle
    access_inclination: float = 0.0
    done: bool = False
    aborted: bool = False
    seeds_placed: int = 0
    peak_force: float = 0.0
    force_sum: float = 0.0
    force_samples: int = 0


class Controller:
    """Owns all procedure state; advance with tick(), drive with handle_command()."""

    def __init__(self, config: SimConfig | None = None, log: EventLog | None = None):
        self.base_config = config or SimConfig()
        self.log = log if log is not None else EventLog()
        self.frame_sink: Callable[[TelemetryFrame], None] | None = None
        self.tick_count = 0
        self._init_procedure_state()

    # -- state management ------------------------------------------------

    def _init_procedure_state(self) -> None:
        self.config = self.base_config
        self.geom = self.config.geometry
        self.tissue_params = self.config.tissue
        self.phase = Phase.IDLE
        self.plan: Plan | None = None
        self.needles: list[_ActiveNeedle] = []
        self.current: int | None = None
        self.hub = Hub.CLAMPED
        self.engagement = interlock.EngagementState(release_threshold=self.config.release_threshold)
        self.tissue_state = tissue.TissueState()
        self.profile: MotionProfile | None = None
        self._pos = {name: 0.0 for name in _LINEAR_JOINTS}
        self._pos["theta"] = 0.0
        self._setp = dict(self._pos)
        self._reported = JointState()
        self._settle = 0
        self._axial_force = 0.0
        self._dir_key: tuple[float, float, float, float] | None = None
        self._dir = (0.0, 0.0, 1.0)

    @property
    def sim_time(self) -> float:
        return self.tick_count * self.config.dt

    def _emit(self, kind: str, data: dict[str, Any] | None = None) -> None:
        self.log.append(self.sim_time, kind, data)

    def _enter(self, phase: Phase, **data: Any) -> None:
        prev = self.phase
        self.phase = phase
        self._emit("phase", {"from": prev.value, "to": phase.value, **data})

    # -- command handling --------------------------------------------------

    def handle_command(
        self, cmd: str, args: dict[str, Any] | None = None, client: str | None = None
    ) -> CommandResult:
        """Apply one operator command between ticks; logs accept or reject."""
        args = args or {}
        result = self._apply(cmd, args)
        logged_args = {k: v for k, v in args.items() if k != "plan"}
        data = {"cmd": cmd, "args": logged_args, "ok": result.ok}
        if client is not None:
            data["client"] = client
        if cmd == "load_plan" and result.ok:
            data["plan"] = plan_doc(self.plan)
            data["config"] = self.config.snapshot()
        elif cmd == "load_plan":
            data["plan"] = args.get("plan") if isinstance(args.get("plan"), dict) else None
        if not result.ok:
            data["reason"] = result.reason
        self._emit("command", data)
        return result

    def _reject(self, cmd: str) -> CommandResult:
        reason = _REASONS.get(f"{self.phase.value}:{cmd}", f"{cmd} not legal in phase {self.phase.value}")
        return CommandResult(ok=False, reason=reason)

    def _apply(self, cmd: str, args: dict[str, Any]) -> CommandResult:
        if cmd not in COMMANDS:
            return CommandResult(ok=False, reason=f"unknown command {cmd!r}")
        if cmd not in _ACCEPT[self.phase.value]:
            return self._reject(cmd)
        return getattr(self, f"_cmd_{cmd}")(args)

    def _cmd_load_plan(self, args: dict[str, Any]) -> CommandResult:
        raw = args.get("plan")
        if isinstance(raw, Plan):
            plan = raw
        elif isinstance(raw, dict):
            try:
                plan = parse_plan(json.dumps(raw))
            except Exception as e:
                return CommandResult(ok=False, reason=f"invalid plan: {e}")
        else:
            return CommandResult(ok=False, reason="load_plan requires a plan object")
        try:
            config = self.base_config.with_plan(plan)
            needles = _resolve_needles(plan, config)
        except (NoAccess, TravelExceeded, ValueError) as e:
            return CommandResult(ok=False, reason=f"plan not executable: {e}")
        self.plan = plan
        self.config = config
        self.geom = config.geometry
        self.tissue_params = config.tissue
        self.engagement = interlock.EngagementState(release_threshold=config.release_threshold)
        self.needles = needles
        self.current = None
        if not needles:
            self._enter(Phase.COMPLETE, note="empty plan")
        else:
            self._enter(Phase.PLAN_LOADED, needles=len(needles))
        return CommandResult(ok=True)

    def _cmd_select_needle(self, args: dict[str, Any]) -> CommandResult:
        wanted = args.get("id")
        for i, n in enumerate(self.needles):
            if n.eff.id == wanted:
                if n.done or n.aborted:
                    return CommandResult(ok=False, reason=f"needle {wanted!r} already finished")
                self.current = i
                return CommandResult(ok=True)
        return CommandResult(ok=False, reason=f"unknown needle id {wanted!r}")

    def _cmd_go_position(self, args: dict[str, Any]) -> CommandResult:
        if self.current is None:
            return CommandResult(ok=False, reason="no needle selected")
        if self._pos["d_ins"] > 0:
            return CommandResult(ok=False, reason="needle not retracted")
        n = self.needles[self.current]
        joints = ik_position(n.pose, self.geom)
        self._setp.update(xf=joints.xf, yf=joints.yf, xr=joints.xr, yr=joints.yr,
                          z_pre=self.geom.guide_standoff)
        self._settle = 0
        self.tissue_state = tissue.TissueState()
        n.peak_force = 0.0
        n.force_sum = 0.0
        n.force_samples = 0
        self._enter(Phase.POSITIONING, needle=n.eff.id)
        return CommandResult(ok=True)

    def _cmd_go_insert(self, args: dict[str, Any]) -> CommandResult:
        if self.current is None:
            return CommandResult(ok=False, reason="no needle selected")
        if self.hub is not Hub.CLAMPED:
            return CommandResult(ok=False, reason="hub must be clamped for insertion")
        n = self.needles[self.current]
        profile = n.eff.profile
        if "profile" in args and args["profile"] is not None:
            raw = args["profile"]
            if isinstance(raw, MotionProfile):
                profile = raw
            else:
                try:
                    from .plan import parse_profile

                    profile = parse_profile(raw, "$.profile")
                except Exception as e:
                    return CommandResult(ok=False, reason=f"bad profile: {e}")
        d_target = n.depth + self.geom.guide_standoff - self._setp["z_pre"]
        if not self.geom.insertion_travel.contains(d_target):
            return CommandResult(ok=False, reason=f"insertion target {d_target:.3f} mm outside travel")
        self.profile = profile
        self._setp["d_ins"] = d_target
        self._enter(Phase.INSERTING, needle=n.eff.id,
                    speed=profile.insertion_speed, rotation=profile.rotation.mode)
        return CommandResult(ok=True)

    def _cmd_release_hub(self, args: dict[str, Any]) -> CommandResult:
        self.hub = Hub.OPEN
        self._enter(Phase.HUB_OPEN)
        return CommandResult(ok=True)

    def _cmd_clamp_hub(self, args: dict[str, Any]) -> CommandResult:
        self.hub = Hub.CLAMPED
        if self.phase is Phase.HUB_OPEN:
            self._enter(Phase.AT_DEPTH, note="hub re-clamped without seed")
        return CommandResult(ok=True)

    def _cmd_confirm_seed(self, args: dict[str, Any]) -> CommandResult:
        n = self.needles[self.current]
        if n.seeds_placed >= len(n.eff.seeds):
            return CommandResult(ok=False, reason="no seeds pending for this needle")
        spec = n.eff.seeds[n.seeds_placed]
        n.seeds_placed += 1
        u = needle_direction(n.pose)
        s = self._tip_advance() - spec.offset_from_tip
        intended = (n.pose.entry_x + u[0] * s, n.pose.entry_y + u[1] * s, u[2] * s)
        err = tissue.seed_offset(self.tissue_state)
        self._emit("seed", {
            "needle": n.eff.id,
            "index": n.seeds_placed - 1,
            "offset_from_tip": spec.offset_from_tip,
            "intended": list(intended),
            "longitudinal_error": err,
        })
        if n.seeds_placed == len(n.eff.seeds):
            self._enter(Phase.SEED_PLACED)
        return CommandResult(ok=True)

    def _cmd_retract(self, args: dict[str, Any]) -> CommandResult:
        if self.hub is not Hub.CLAMPED:
            return CommandResult(ok=False, reason="clamp the hub before retracting")
        self._setp["d_ins"] = 0.0
        self.profile = None
        self._enter(Phase.RETRACTING)
        return CommandResult(ok=True)

    def _cmd_next_needle(self, args: dict[str, Any]) -> CommandResult:
        if self.current is not None:
            self.needles[self.current].done = True
            self.current = None
        if any(not (n.done or n.aborted) for n in self.needles):
            self._enter(Phase.PLAN_LOADED)
        else:
            self._enter(Phase.COMPLETE)
        return CommandResult(ok=True)

    def _cmd_set_threshold(self, args: dict[str, Any]) -> CommandResult:
        try:
            value = float(args["newtons"])
        except (KeyError, TypeError, ValueError):
            return CommandResult(ok=False, reason="set_threshold requires numeric 'newtons'")
        if value <= self.tissue_params.F_punct:
            return CommandResult(
                ok=False,
                reason=f"threshold {value:g} N must exceed puncture force {self.tissue_params.F_punct:g} N",
            )
        self.engagement.release_threshold = value
        self._emit("threshold", {"newtons": value})
        return CommandResult(ok=True)

    def _cmd_apply_shift(self, args: dict[str, Any]) -> CommandResult:
        try:
            off = tuple(float(c) for c in args["offset"])
            assert len(off) == 3
        except Exception:
            return CommandResult(ok=False, reason="apply_shift requires offset [dx, dy, dz]")
        from .plan import apply_prostate_shift

        try:
            shifted = apply_prostate_shift(self.plan, off)
            needles = _resolve_needles(shifted, self.config, keep=self.needles)
        except (TravelExceeded, NoAccess) as e:
            return CommandResult(ok=False, reason=f"shift not executable: {e}")
        self.plan = shifted
        self.needles = needles
        self._emit("shift", {"offset": list(off), "total": list(shifted.applied_shift)})
        return CommandResult(ok=True)

    def _cmd_e_stop(self, args: dict[str, Any]) -> CommandResult:
        for name in _LINEAR_JOINTS:
            self._setp[name] = self._pos[name]
        self.profile = None
        if self.phase is not Phase.EMERGENCY_MANUAL:
            self._enter(Phase.EMERGENCY_MANUAL)
        return CommandResult(ok=True)

    def _cmd_manual_retract(self, args: dict[str, Any]) -> CommandResult:
        try:
            amount = float(args["mm"])
        except (KeyError, TypeError, ValueError):
            return CommandResult(ok=False, reason="manual_retract requires numeric 'mm'")
        try:
            new_d = interlock.manual_retract(
                self.engagement, self._pos["d_ins"], amount,
                emergency=self.phase is Phase.EMERGENCY_MANUAL,
            )
        except (NotPermitted, ValueError) as e:
            return CommandResult(ok=False, reason=str(e))
        self._pos["d_ins"] = new_d
        self._setp["d_ins"] = new_d
        self._emit("manual_retract", {"mm": amount, "d_ins": new_d})
        return CommandResult(ok=True)

    def _cmd_rehome(self, args: dict[str, Any]) -> CommandResult:
        try:
            interlock.rehome(self.engagement, self._pos["d_ins"])
        except NotAtHome as e:
            return CommandResult(ok=False, reason=str(e))
        # Re-engagement is modeled behavior; the physical release only
        # documents the letting-go, so flag it in the log.
        self._emit("rehome", {"modeled": True})
        if self.current is not None:
            self.needles[self.current].aborted = True
            self.current = None
        if self.plan is not None and any(not (n.done or n.aborted) for n in self.needles):
            self._enter(Phase.PLAN_LOADED)
        elif self.plan is not None:
            self._enter(Phase.COMPLETE)
        else:
            self._enter(Phase.IDLE)
        return CommandResult(ok=True)

    def _cmd_reset(self, args: dict[str, Any]) -> CommandResult:
        self._emit("reset", {})
        prev = self.phase
        self._init_procedure_state()
        if prev is not Phase.IDLE:
            self._emit("phase", {"from": prev.value, "to": Phase.IDLE.value})
        return CommandResult(ok=True)

    # -- simulation ---------------------------------------------------------

    def _tip_advance(self) -> float:
        return self._reported.z_pre + self._reported.d_ins - self.geom.guide_standoff

    def _tissue_depth(self) -> float:
        u_z = self._direction()[2]
        start = self.tissue_params.tissue_plane_z / u_z
        return max(0.0, self._tip_advance() - start)

    def _direction(self) -> tuple[float, float, float]:
        # Carriages move rarely relative to the tick rate; cache on their pose.
        r = self._reported
        key = (r.xf, r.yf, r.xr, r.yr)
        if key != self._dir_key:
            self._dir_key = key
            self._dir = needle_direction(self._frame_pose())
        return self._dir

    def _frame_pose(self) -> NeedlePose:
        r = self._reported
        L = self.geom.baseline_length
        return NeedlePose(
            entry_x=r.xf,
            entry_y=r.yf,
            pitch=math.degrees(math.atan((r.yf - r.yr) / L)),
            yaw=math.degrees(math.atan((r.xf - r.xr) / L)),
        )

    def _move_axis(self, name: str, speed: float) -> None:
        pos, target = self._pos[name], self._setp[name]
        if pos == target:
            return
        step = speed * self.config.dt
        if pos < target:
            self._pos[name] = min(target, pos + step)
        else:
            self._pos[name] = max(target, pos - step)

    def tick(self) -> TelemetryFrame | None:
        """Advance the simulation by one fixed step.

        Returns the new telemetry frame when a frame sink is attached;
        otherwise frames are assembled on demand via frame().
        """
        dt = self.config.dt
        cfg = self.config
        p = self.tissue_params

        for name in ("xf", "yf", "xr", "yr", "z_pre"):
            self._move_axis(name, cfg.positioning_speed)

        drive_ok = self.engagement.status is interlock.EngagementStatus.ENGAGED
        if drive_ok:
            if self.phase is Phase.INSERTING and self.profile is not None:
                self._move_axis("d_ins", self.profile.insertion_speed)
            elif self.phase is Phase.RETRACTING:
                self._move_axis("d_ins", cfg.retraction_speed)

        omega = 0.0
        if self.phase is Phase.INSERTING and self.profile is not None:
            rot = self.profile.rotation
            if rot.mode == "continuous":
                omega = rot.omega
                self._pos["theta"] += omega * 360.0 * dt

        prev_reported = self._reported
        self._reported = quantize(
            JointState(
                xf=self._pos["xf"], yf=self._pos["yf"], xr=self._pos["xr"], yr=self._pos["yr"],
                z_pre=self._pos["z_pre"], d_ins=self._pos["d_ins"], theta=self._pos["theta"],
            ),
            self.geom,
        )

        # Tissue interaction from the realized (quantized) motion.
        events: list[tissue.PunctureEvent] = []
        depth = self._tissue_depth()
        delta = depth - self.tissue_state.tip_depth
        v = self.profile.insertion_speed if self.profile is not None else cfg.retraction_speed
        if delta > 0:
            if self.profile is not None and self.profile.rotation.mode == "indexed":
                before = math.floor(self.tissue_state.tip_depth)
                after = math.floor(depth)
                if after > before:
                    self._pos["theta"] += self.profile.rotation.step * (after - before)
            force, events = tissue.step(self.tissue_state, delta, v, omega, p)
        elif delta < 0:
            force = tissue.retract(self.tissue_state, -delta, v, 0.0, p)
        else:
            force = self.tissue_state.last_force

        bone = 0.0
        if self.plan is not None:
            for b in self.plan.bones:
                overlap = self.tissue_state.tip_depth - b.depth
                if overlap > 0:
                    bone += tissue.bone_contact_force(overlap, p)
        self._axial_force = force + bone

        for ev in events:
            self._emit("puncture", {"depth": ev.depth, "peak_force": ev.peak_force})

        trip = interlock.update(self.engagement, self._axial_force)
        if trip is not None:
            self._setp["d_ins"] = self._pos["d_ins"]
            self.profile = None
            self._emit("trip", {"force": trip.force, "threshold": trip.threshold})
            self._enter(Phase.SAFETY_TRIPPED)

        if self.current is not None and self.phase is Phase.INSERTING:
            n = self.needles[self.current]
            n.peak_force = max(n.peak_force, self._axial_force)
            n.force_sum += self._axial_force
            n.force_samples += 1

        self._auto_transitions()

        self.tick_count += 1
        if self.frame_sink is not None:
            frame = self.frame()
            self.frame_sink(frame)
            return frame
        return None

    def _auto_transitions(self) -> None:
        if self.phase is Phase.POSITIONING:
            tol = self.geom.joint_resolution_linear
            settled = all(
                abs(self._pos[name] - self._setp[name]) < tol
                for name in ("xf", "yf", "xr", "yr", "z_pre")
            )
            self._settle = self._settle + 1 if settled else 0
            if self._settle >= self.config.settle_ticks:
                self._enter(Phase.PREPOSITIONED)
        elif self.phase is Phase.INSERTING:
            if self._pos["d_ins"] == self._setp["d_ins"]:
                n = self.needles[self.current]
                mean = n.force_sum / n.force_samples if n.force_samples else 0.0
                self._emit("at_depth", {
                    "needle": n.eff.id,
                    "tip_depth": self.tissue_state.tip_depth,
                    "peak_force": n.peak_force,
                    "mean_force": mean,
                })
                self.profile = None
                self._enter(Phase.AT_DEPTH)
        elif self.phase is Phase.RETRACTING:
            if self._pos["d_ins"] == 0.0:
                n = self.needles[self.current]
                self._emit("needle_summary", {
                    "needle": n.eff.id,
                    "peak_force": n.peak_force,
                    "mean_force": n.force_sum / n.force_samples if n.force_samples else 0.0,
                    "seeds": n.seeds_placed,
                })
                self._enter(Phase.NEEDLE_DONE, needle=n.eff.id)

    def frame(self) -> TelemetryFrame:
        pose = self._frame_pose()
        u = needle_direction(pose)
        s = self._tip_advance()
        n = self.needles[self.current] if self.current is not None else None
        return TelemetryFrame(
            tick=self.tick_count,
            sim_time=self.sim_time,
            phase=self.phase.value,
            joints=self._reported,
            entry_x=pose.entry_x,
            entry_y=pose.entry_y,
            pitch=pose.pitch,
            yaw=pose.yaw,
            tip=(pose.entry_x + u[0] * s, pose.entry_y + u[1] * s, u[2] * s),
            tip_depth=self.tissue_state.tip_depth,
            axial_force=self._axial_force,
            peak_force=n.peak_force if n is not None else 0.0,
            prostate_displacement=self.tissue_state.prostate_displacement,
            engagement=self.engagement.status.value,
            trip_force=self.engagement.trip_force,
            release_threshold=self.engagement.release_threshold,
            hub=self.hub.value,
            needle_id=n.eff.id if n is not None else None,
            punctured=self.tissue_state.punctured,
        )


def _resolve_needles(plan: Plan, config: SimConfig, keep: list[_ActiveNeedle] | None = None) -> list[_ActiveNeedle]:
    """Turn plan tasks into executable needles; arch-avoiding targets are
    solved here. ``keep`` preserves progress flags across a reference shift."""
    geom = config.geometry
    status = {n.eff.id: (n.done, n.aborted, n.seeds_placed, n.peak_force, n.force_sum, n.force_samples)
              for n in (keep or [])}
    out: list[_ActiveNeedle] = []
    for eff in plan.effective_needles():
        if eff.pose is not None:
            active = _ActiveNeedle(eff=eff, pose=eff.pose, depth=eff.depth)
        else:
            try:
                sol = plan_access(eff.target_point, plan.arch, geom)
            except NoAccess as e:
                raise NoAccess(f"needle {eff.id!r}: {e}") from None
            advance = math.dist((sol.pose.entry_x, sol.pose.entry_y, 0.0), eff.target_point)
            d_target = advance  # z_pre is prepositioned to the guide standoff
            if not geom.insertion_travel.contains(d_target):
                raise TravelExceeded([("d_ins", d_target, geom.insertion_travel.lo, geom.insertion_travel.hi)])
            active = _ActiveNeedle(eff=eff, pose=sol.pose, depth=advance,
                                   access_inclination=sol.inclination)
        if eff.id in status:
            active.done, active.aborted, active.seeds_placed, active.peak_force, \
                active.force_sum, active.force_samples = status[eff.id]
        out.append(active)
    return out


def run_plan(
    plan: Plan,
    profile: MotionProfile | None = None,
    config: SimConfig | None = None,
    max_ticks: int = 2_000_000,
) -> tuple[EventLog, Controller]:
    """Execute a whole plan headlessly with auto-issued operator commands.

    Returns the complete event log (terminated by a digest record) and the
    final controller. A trip ends the run cleanly in SAFETY_TRIPPED; a
    rejected command raises RunFailure with the offending needle id.
    """
    controller = Controller(config)

    def issue(cmd: str, args: dict[str, Any] | None = None) -> None:
        res = controller.handle_command(cmd, args)
        if not res.ok:
            needle = None
            if controller.current is not None:
                needle = controller.needles[controller.current].eff.id
            raise RunFailure(needle, f"{cmd}: {res.reason}")

    issue("load_plan", {"plan": plan})
    # Commands carry wire-form args so the log stays JSON and replayable.
    override = None
    if profile is not None:
        from .plan import profile_doc

        override = profile_doc(profile)

    while controller.tick_count < max_ticks:
        phase = controller.phase
        if phase is Phase.COMPLETE or phase is Phase.SAFETY_TRIPPED:
            break
        if phase is Phase.PLAN_LOADED:
            pending = next(n for n in controller.needles if not (n.done or n.aborted))
            issue("select_needle", {"id": pending.eff.id})
            issue("go_position", {})
        elif phase is Phase.PREPOSITIONED:
            args: dict[str, Any] = {}
            if override is not None:
                args["profile"] = override
            issue("go_insert", args)
        elif phase is Phase.AT_DEPTH:
            n = controller.needles[controller.current]
            if n.seeds_placed < len(n.eff.seeds):
                issue("release_hub", {})
            else:
                issue("retract", {})
        elif phase is Phase.HUB_OPEN:
            issue("confirm_seed", {})
        elif phase is Phase.SEED_PLACED:
            if controller.hub is Hub.OPEN:
                issue("clamp_hub", {})
            else:
                issue("retract", {})
        elif phase is Phase.NEEDLE_DONE:
            issue("next_needle", {})
        else:
            controller.tick()
    else:
        raise RunFailure(None, f"run exceeded {max_ticks} ticks")

    digest = frame_digest(controller.frame().to_doc())
    controller.log.append(controller.sim_time, "digest", {"tick": controller.tick_count, "sha256": digest})
    return controller.log, controller
