"""Procedure plan model with strict parsing and canonical serialization.

The file format is JSON with an explicit ``version``. Parsing is strict:
unknown fields are rejected and every domain invariant is checked up front,
because a plan encodes a medical procedure. Serialization is canonical:
keys sorted, needles ordered by id, numbers carried as floats rounded to
1 nm / 1e-9 deg (far below mechanical resolution) and printed in shortest
round-trip form.

Reference-frame shifts for prostate motion are stored as a cumulative offset
next to the needles as authored, so applying a shift and then its negation
restores the original plan bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

from .errors import ParseError, TravelExceeded, ValidationError
from .kinematics import NeedlePose, RobotGeometry, Travel, ik_position, needle_direction
from .tissue import TissueParams
from .workspace import ArchObstacle, BoneObstacle, Capsule, TemplateGrid, grid_to_entry

PLAN_VERSION = 1

# Canonical numeric precision: anything finer than 1e-9 is formatting noise
# at mm scale, so values are normalized on construction and at parse.
_PRECISION = 9


def canon_f(x: float) -> float:
    v = round(float(x), _PRECISION)
    return 0.0 if v == 0.0 else v


def _canon3(v: tuple[float, float, float]) -> tuple[float, float, float]:
    return (canon_f(v[0]), canon_f(v[1]), canon_f(v[2]))


@dataclass(frozen=True)
class SeedSpec:
    offset_from_tip: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "offset_from_tip", canon_f(self.offset_from_tip))
        if self.offset_from_tip < 0:
            raise ValidationError("seed", "offset_from_tip must be non-negative")


@dataclass(frozen=True)
class Rotation:
    """Needle rotation during insertion: none, continuous at ``omega`` rps,
    or indexed steps of ``step`` degrees per millimeter of advance."""

    mode: str = "none"
    omega: float = 0.0
    step: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", canon_f(self.omega))
        object.__setattr__(self, "step", canon_f(self.step))
        if self.mode not in ("none", "continuous", "indexed"):
            raise ValidationError("profile", f"unknown rotation mode {self.mode!r}")
        if self.mode == "continuous" and not (0.0 < self.omega <= 15.0):
            raise ValidationError("profile", "continuous rotation requires 0 < omega <= 15 rps")
        if self.mode == "indexed" and self.step <= 0.0:
            raise ValidationError("profile", "indexed rotation requires step > 0 degrees")
        if self.mode == "none" and (self.omega or self.step):
            raise ValidationError("profile", "rotation mode 'none' takes no omega/step")


@dataclass(frozen=True)
class MotionProfile:
    insertion_speed: float = 5.0  # mm/s
    rotation: Rotation = field(default_factory=Rotation)

    def __post_init__(self):
        object.__setattr__(self, "insertion_speed", canon_f(self.insertion_speed))
        if not (1.0 <= self.insertion_speed <= 10.0):
            raise ValidationError("profile", "insertion_speed must be within [1, 10] mm/s")

    @property
    def omega(self) -> float:
        return self.rotation.omega if self.rotation.mode == "continuous" else 0.0


@dataclass(frozen=True)
class NeedleTask:
    """One needle of the plan. Target is either a template hole (optionally
    with automatic arch-avoiding access) or an explicit pose."""

    id: str
    depth: float
    profile: MotionProfile = field(default_factory=MotionProfile)
    seeds: tuple[SeedSpec, ...] = ()
    grid: tuple[int, int] | None = None
    entry: tuple[float, float] | None = None
    pitch: float = 0.0
    yaw: float = 0.0
    access_auto: bool = False

    def __post_init__(self):
        object.__setattr__(self, "depth", canon_f(self.depth))
        object.__setattr__(self, "pitch", canon_f(self.pitch))
        object.__setattr__(self, "yaw", canon_f(self.yaw))
        if self.entry is not None:
            object.__setattr__(self, "entry", (canon_f(self.entry[0]), canon_f(self.entry[1])))
        if not self.id:
            raise ValidationError("needle", "id must be a non-empty string")
        if (self.grid is None) == (self.entry is None):
            raise ValidationError(self.id, "target must be exactly one of grid or explicit entry")
        if self.access_auto and self.grid is None:
            raise ValidationError(self.id, "automatic access applies to grid targets only")
        if self.depth <= 0:
            raise ValidationError(self.id, "depth must be positive")
        for s in self.seeds:
            if s.offset_from_tip > self.depth:
                raise ValidationError(self.id, "seed offset_from_tip exceeds needle depth")


@dataclass(frozen=True)
class EffectiveNeedle:
    """A needle task after the plan-level reference shift is applied.

    ``pose`` is set for horizontal grid targets and explicit targets;
    automatic-access targets carry the 3D ``target_point`` instead and are
    resolved against the arch at load time. ``depth`` is the tip advance
    along the needle axis past the template plane.
    """

    id: str
    depth: float
    profile: MotionProfile
    seeds: tuple[SeedSpec, ...]
    pose: NeedlePose | None = None
    target_point: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class Plan:
    version: int = PLAN_VERSION
    geometry: dict[str, Any] = field(default_factory=dict)
    tissue: dict[str, Any] = field(default_factory=dict)
    interlock: dict[str, Any] = field(default_factory=dict)
    arch: ArchObstacle = field(default_factory=ArchObstacle)
    bones: tuple[BoneObstacle, ...] = ()
    needles: tuple[NeedleTask, ...] = ()
    applied_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    shift_history: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "applied_shift", _canon3(self.applied_shift))
        object.__setattr__(self, "shift_history", tuple(_canon3(s) for s in self.shift_history))
        object.__setattr__(self, "needles", tuple(sorted(self.needles, key=lambda n: n.id)))
        if self.version != PLAN_VERSION:
            raise ValidationError("plan", f"unsupported version {self.version} (supported: {PLAN_VERSION})")
        seen: set[str] = set()
        for n in self.needles:
            if n.id in seen:
                raise ValidationError(n.id, "duplicate needle id")
            seen.add(n.id)
        # Constructing the overridden parameter objects validates them.
        self.build_geometry()
        self.build_tissue()
        self.release_threshold()

    def build_geometry(self) -> RobotGeometry:
        kwargs: dict[str, Any] = {}
        for key, value in self.geometry.items():
            if key in ("front_travel", "rear_travel", "z_travel", "insertion_travel"):
                kwargs[key] = Travel(float(value[0]), float(value[1]))
            else:
                kwargs[key] = value
        try:
            return RobotGeometry(**kwargs)
        except (TypeError, ValueError) as e:
            raise ValidationError("geometry", str(e)) from e

    def build_tissue(self) -> TissueParams:
        try:
            return TissueParams(**self.tissue)
        except (TypeError, ValueError) as e:
            raise ValidationError("tissue", str(e)) from e

    def release_threshold(self) -> float:
        thr = float(self.interlock.get("release_threshold", 8.0))
        f_punct = self.build_tissue().F_punct
        if thr <= f_punct:
            raise ValidationError(
                "interlock", f"release_threshold {thr:g} must exceed puncture force {f_punct:g}"
            )
        return thr

    def effective_needles(self) -> tuple[EffectiveNeedle, ...]:
        dx, dy, dz = self.applied_shift
        grid = TemplateGrid()
        out = []
        for n in self.needles:
            if n.grid is not None:
                gx, gy = grid_to_entry(n.grid[0], n.grid[1], grid)
                if n.access_auto:
                    out.append(
                        EffectiveNeedle(
                            id=n.id,
                            depth=canon_f(n.depth + dz),
                            profile=n.profile,
                            seeds=n.seeds,
                            target_point=(canon_f(gx + dx), canon_f(gy + dy), canon_f(n.depth + dz)),
                        )
                    )
                else:
                    pose = NeedlePose(entry_x=canon_f(gx + dx), entry_y=canon_f(gy + dy))
                    out.append(
                        EffectiveNeedle(
                            id=n.id, depth=canon_f(n.depth + dz), profile=n.profile, seeds=n.seeds, pose=pose
                        )
                    )
            else:
                ty = math.tan(math.radians(n.yaw))
                tp = math.tan(math.radians(n.pitch))
                uz = needle_direction(NeedlePose(0, 0, n.pitch, n.yaw))[2]
                pose = NeedlePose(
                    entry_x=canon_f(n.entry[0] + dx - dz * ty),
                    entry_y=canon_f(n.entry[1] + dy - dz * tp),
                    pitch=n.pitch,
                    yaw=n.yaw,
                )
                out.append(
                    EffectiveNeedle(
                        id=n.id, depth=canon_f(n.depth + dz / uz), profile=n.profile, seeds=n.seeds, pose=pose
                    )
                )
        return tuple(out)


def validate_workspace(plan: Plan) -> None:
    """Check every effective needle against travel limits.

    Raises TravelExceeded for carriage/insertion violations (the natural
    failure of a reference shift) — parse_plan rewraps it as ValidationError.
    """
    geom = plan.build_geometry()
    for eff in plan.effective_needles():
        if eff.depth > geom.insertion_travel.hi:
            raise TravelExceeded(
                [("d_ins", eff.depth, geom.insertion_travel.lo, geom.insertion_travel.hi)]
            )
        if eff.pose is not None:
            eff.pose.validate(geom)
            ik_position(eff.pose, geom)
        else:
            x, y, _ = eff.target_point
            bad = [
                (name, v, geom.front_travel.lo, geom.front_travel.hi)
                for name, v in (("xf", x), ("yf", y))
                if not geom.front_travel.contains(v)
            ]
            if bad:
                raise TravelExceeded(bad)


def apply_prostate_shift(plan: Plan, offset: tuple[float, float, float]) -> Plan:
    """Translate the plan's reference frame by ``offset`` (mm).

    Entries move with the prostate, depths are recomputed so tips still land
    on the shifted targets, and the shift is recorded in the plan metadata.
    The input plan is unchanged. Raises TravelExceeded when a shifted needle
    leaves the workspace.
    """
    off = _canon3(tuple(float(c) for c in offset))
    cum = _canon3(
        (plan.applied_shift[0] + off[0], plan.applied_shift[1] + off[1], plan.applied_shift[2] + off[2])
    )
    shifted = replace(plan, applied_shift=cum, shift_history=plan.shift_history + (off,))
    validate_workspace(shifted)
    return shifted


# --- strict parsing ---------------------------------------------------------


def _reject_constant(name: str):
    raise ParseError("$", f"non-finite number {name} is not allowed")


class _Node:
    """Cursor over one JSON object that tracks consumed keys."""

    def __init__(self, obj: Any, path: str):
        if not isinstance(obj, dict):
            raise ParseError(path, f"expected object, got {type(obj).__name__}")
        self.obj = dict(obj)
        self.path = path

    def take(self, key: str, required: bool = False, default: Any = None) -> Any:
        if key not in self.obj:
            if required:
                raise ParseError(self.path, f"missing required field {key!r}")
            return default
        return self.obj.pop(key)

    def done(self) -> None:
        if self.obj:
            raise ParseError(self.path, f"unknown field(s): {', '.join(sorted(self.obj))}")


def _number(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(path, f"expected number, got {type(v).__name__}")
    if not math.isfinite(v):
        raise ParseError(path, "number must be finite")
    return canon_f(float(v))


def _vec(v: Any, n: int, path: str) -> tuple[float, ...]:
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(path, f"expected array of {n} numbers")
    return tuple(_number(c, path) for c in v)


def _string(v: Any, path: str) -> str:
    if not isinstance(v, str):
        raise ParseError(path, f"expected string, got {type(v).__name__}")
    return v


def _parse_rotation(raw: Any, path: str) -> Rotation:
    node = _Node(raw, path)
    mode = _string(node.take("mode", required=True), path + ".mode")
    omega = node.take("omega")
    step = node.take("step")
    node.done()
    return Rotation(
        mode=mode,
        omega=_number(omega, path + ".omega") if omega is not None else 0.0,
        step=_number(step, path + ".step") if step is not None else 0.0,
    )


def parse_profile(raw: Any, path: str) -> MotionProfile:
    node = _Node(raw, path)
    speed = node.take("speed")
    rotation = node.take("rotation")
    node.done()
    return MotionProfile(
        insertion_speed=_number(speed, path + ".speed") if speed is not None else 5.0,
        rotation=_parse_rotation(rotation, path + ".rotation") if rotation is not None else Rotation(),
    )


def _parse_target(task: _Node, needle_id: str, path: str) -> dict[str, Any]:
    raw = task.take("target", required=True)
    node = _Node(raw, path + ".target")
    grid = node.take("grid")
    entry = node.take("entry")
    pitch = node.take("pitch")
    yaw = node.take("yaw")
    access = node.take("access")
    node.done()
    out: dict[str, Any] = {}
    if grid is not None:
        g = _vec(grid, 2, path + ".target.grid")
        if any(abs(c - round(c)) > 1e-9 for c in g):
            raise ParseError(path + ".target.grid", "grid indices must be integers")
        out["grid"] = (int(round(g[0])), int(round(g[1])))
        if pitch is not None or yaw is not None:
            raise ParseError(path + ".target", "grid targets take no pitch/yaw")
    if entry is not None:
        out["entry"] = _vec(entry, 2, path + ".target.entry")
        out["pitch"] = _number(pitch, path + ".target.pitch") if pitch is not None else 0.0
        out["yaw"] = _number(yaw, path + ".target.yaw") if yaw is not None else 0.0
    if access is not None:
        mode = _string(access, path + ".target.access")
        if mode != "auto":
            raise ParseError(path + ".target.access", "only \"auto\" is supported")
        out["access_auto"] = True
    if ("grid" in out) == ("entry" in out):
        raise ValidationError(needle_id, "target must be exactly one of grid or explicit entry")
    return out


_GEOMETRY_SCALARS = (
    "baseline_length",
    "guide_standoff",
    "max_inclination",
    "joint_resolution_linear",
    "joint_resolution_rotation",
    "calibration_error_bound",
)
_GEOMETRY_TRAVELS = ("front_travel", "rear_travel", "z_travel", "insertion_travel")
_TISSUE_FIELDS = (
    "k_load",
    "F_punct",
    "F_cut",
    "mu_fric",
    "omega_ref",
    "rot_reduction",
    "v_lo",
    "v_hi",
    "vel_reduction",
    "k_prostate",
    "k_bone",
    "tissue_plane_z",
)


def _parse_geometry(raw: Any, path: str) -> dict[str, Any]:
    node = _Node(raw, path)
    out: dict[str, Any] = {}
    for key in _GEOMETRY_SCALARS:
        v = node.take(key)
        if v is not None:
            out[key] = _number(v, f"{path}.{key}")
    for key in _GEOMETRY_TRAVELS:
        v = node.take(key)
        if v is not None:
            out[key] = list(_vec(v, 2, f"{path}.{key}"))
    gauge = node.take("needle_gauge")
    if gauge is not None:
        out["needle_gauge"] = _string(gauge, path + ".needle_gauge")
    node.done()
    return out


def _parse_obstacles(raw: Any, path: str) -> tuple[ArchObstacle, tuple[BoneObstacle, ...]]:
    node = _Node(raw, path)
    arch_raw = node.take("arch", default=[])
    bone_raw = node.take("bone", default=[])
    node.done()
    if not isinstance(arch_raw, list) or not isinstance(bone_raw, list):
        raise ParseError(path, "arch and bone must be arrays")
    capsules = []
    for i, c in enumerate(arch_raw):
        cn = _Node(c, f"{path}.arch[{i}]")
        a = _vec(cn.take("a", required=True), 3, f"{path}.arch[{i}].a")
        b = _vec(cn.take("b", required=True), 3, f"{path}.arch[{i}].b")
        r = _number(cn.take("radius", required=True), f"{path}.arch[{i}].radius")
        cn.done()
        if r <= 0:
            raise ValidationError(f"arch[{i}]", "capsule radius must be positive")
        capsules.append(Capsule(a, b, r))
    bones = []
    for i, b in enumerate(bone_raw):
        bn = _Node(b, f"{path}.bone[{i}]")
        depth = _number(bn.take("depth", required=True), f"{path}.bone[{i}].depth")
        bn.done()
        if depth < 0:
            raise ValidationError(f"bone[{i}]", "bone depth must be non-negative")
        bones.append(BoneObstacle(depth))
    return ArchObstacle(tuple(capsules)), tuple(bones)


def parse_plan(data: bytes | str) -> Plan:
    """Parse and fully validate plan bytes. Strict: unknown fields fail."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError("$", f"not valid UTF-8: {e}") from None
    try:
        raw = json.loads(data, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno} col {e.colno}", e.msg) from None

    root = _Node(raw, "$")
    version = root.take("version", required=True)
    if isinstance(version, bool) or not isinstance(version, int):
        raise ParseError("$.version", "version must be an integer")

    geometry = _parse_geometry(root.take("geometry", default={}), "$.geometry")

    tissue_raw = _Node(root.take("tissue", default={}), "$.tissue")
    tissue: dict[str, Any] = {}
    for key in _TISSUE_FIELDS:
        v = tissue_raw.take(key)
        if v is not None:
            tissue[key] = _number(v, f"$.tissue.{key}")
    tissue_raw.done()

    interlock_raw = _Node(root.take("interlock", default={}), "$.interlock")
    interlock: dict[str, Any] = {}
    thr = interlock_raw.take("release_threshold")
    if thr is not None:
        interlock["release_threshold"] = _number(thr, "$.interlock.release_threshold")
    interlock_raw.done()

    arch, bones = _parse_obstacles(root.take("obstacles", default={}), "$.obstacles")

    needles_raw = root.take("needles", default=[])
    if not isinstance(needles_raw, list):
        raise ParseError("$.needles", "needles must be an array")
    needles = []
    for i, n in enumerate(needles_raw):
        path = f"$.needles[{i}]"
        node = _Node(n, path)
        needle_id = _string(node.take("id", required=True), path + ".id")
        target = _parse_target(node, needle_id, path)
        depth = _number(node.take("depth", required=True), path + ".depth")
        profile_raw = node.take("profile")
        seeds_raw = node.take("seeds", default=[])
        node.done()
        if not isinstance(seeds_raw, list):
            raise ParseError(path + ".seeds", "seeds must be an array")
        seeds = []
        for j, s in enumerate(seeds_raw):
            sn = _Node(s, f"{path}.seeds[{j}]")
            off = sn.take("offset_from_tip", default=0.0)
            sn.done()
            seeds.append(SeedSpec(offset_from_tip=_number(off, f"{path}.seeds[{j}].offset_from_tip")))
        profile = parse_profile(profile_raw, path + ".profile") if profile_raw is not None else MotionProfile()
        needles.append(
            NeedleTask(id=needle_id, depth=depth, profile=profile, seeds=tuple(seeds), **target)
        )

    meta_raw = _Node(root.take("metadata", default={}), "$.metadata")
    shift = meta_raw.take("applied_shift")
    history = meta_raw.take("shift_history", default=[])
    meta_raw.done()
    applied_shift = _vec(shift, 3, "$.metadata.applied_shift") if shift is not None else (0.0, 0.0, 0.0)
    if not isinstance(history, list):
        raise ParseError("$.metadata.shift_history", "must be an array")
    shift_history = tuple(_vec(h, 3, f"$.metadata.shift_history[{i}]") for i, h in enumerate(history))

    root.done()

    plan = Plan(
        version=version,
        geometry=geometry,
        tissue=tissue,
        interlock=interlock,
        arch=arch,
        bones=bones,
        needles=tuple(needles),
        applied_shift=applied_shift,
        shift_history=shift_history,
    )
    geom = plan.build_geometry()
    for n in plan.needles:
        if n.depth > geom.insertion_travel.hi:
            raise ValidationError(n.id, f"depth exceeds insertion travel {geom.insertion_travel.hi:g}")
    try:
        validate_workspace(plan)
    except TravelExceeded as e:
        raise ValidationError("plan", str(e)) from None
    return plan


# --- canonical serialization -------------------------------------------------


def profile_doc(p: MotionProfile) -> dict[str, Any]:
    """Wire/file form of a motion profile (inverse of parse_profile)."""
    doc: dict[str, Any] = {"speed": p.insertion_speed}
    if p.rotation.mode == "continuous":
        doc["rotation"] = {"mode": "continuous", "omega": p.rotation.omega}
    elif p.rotation.mode == "indexed":
        doc["rotation"] = {"mode": "indexed", "step": p.rotation.step}
    return doc


def _task_doc(n: NeedleTask) -> dict[str, Any]:
    target: dict[str, Any] = {}
    if n.grid is not None:
        target["grid"] = [n.grid[0], n.grid[1]]
        if n.access_auto:
            target["access"] = "auto"
    else:
        target["entry"] = [n.entry[0], n.entry[1]]
        if n.pitch:
            target["pitch"] = n.pitch
        if n.yaw:
            target["yaw"] = n.yaw
    doc: dict[str, Any] = {"id": n.id, "target": target, "depth": n.depth, "profile": profile_doc(n.profile)}
    if n.seeds:
        doc["seeds"] = [{"offset_from_tip": s.offset_from_tip} for s in n.seeds]
    return doc


def plan_doc(plan: Plan) -> dict[str, Any]:
    """Plan as a canonical JSON-ready dict (optional empty sections omitted)."""
    doc: dict[str, Any] = {"version": plan.version}
    if plan.geometry:
        doc["geometry"] = plan.geometry
    if plan.tissue:
        doc["tissue"] = plan.tissue
    if plan.interlock:
        doc["interlock"] = plan.interlock
    obstacles: dict[str, Any] = {}
    if plan.arch.capsules:
        obstacles["arch"] = [
            {"a": list(c.a), "b": list(c.b), "radius": c.radius} for c in plan.arch.capsules
        ]
    if plan.bones:
        obstacles["bone"] = [{"depth": b.depth} for b in plan.bones]
    if obstacles:
        doc["obstacles"] = obstacles
    if plan.needles:
        doc["needles"] = [_task_doc(n) for n in plan.needles]
    meta: dict[str, Any] = {}
    if any(plan.applied_shift):
        meta["applied_shift"] = list(plan.applied_shift)
    if plan.shift_history:
        meta["shift_history"] = [list(s) for s in plan.shift_history]
    if meta:
        doc["metadata"] = meta
    return doc


def serialize_plan(plan: Plan) -> bytes:
    """Canonical bytes: sorted keys, two-space indent, trailing newline."""
    return (json.dumps(plan_doc(plan), sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
