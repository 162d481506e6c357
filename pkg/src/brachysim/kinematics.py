"""Closed-form kinematics for the rail-parallelogram needle positioner.

Frame convention (right-handed): z points from the robot into the patient
along the nominal horizontal needle axis. The template plane and the front
rail plane sit at z = 0, the rear rail plane at z = -baseline_length. The
needle line runs through the front support point (xf, yf, 0) and the rear
support point (xr, yr, -baseline_length); its direction is proportional to
(tan(yaw), tan(pitch), 1). Positive pitch tips the needle up (+y), positive
yaw to the right (+x). All lengths in mm, all angles in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import InclinationExceeded, TravelExceeded

NEEDLE_GAUGES = ("17G", "18G")


@dataclass(frozen=True)
class Travel:
    """Closed travel range of one linear axis, in mm."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError(f"degenerate travel range [{self.lo}, {self.hi}]")

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    @property
    def span(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class RobotGeometry:
    """Dimensions, travels and actuator resolution of the mechanism.

    ``front_travel``/``rear_travel`` apply to both the x and y axis of the
    respective carriage pair. ``guide_standoff`` is the distance from the
    needle-guide exit to the template plane, measured along the needle axis.
    """

    baseline_length: float = 100.0
    front_travel: Travel = field(default_factory=lambda: Travel(-52.5, 52.5))
    rear_travel: Travel = field(default_factory=lambda: Travel(-112.5, 112.5))
    z_travel: Travel = field(default_factory=lambda: Travel(0.0, 100.0))
    insertion_travel: Travel = field(default_factory=lambda: Travel(0.0, 150.0))
    guide_standoff: float = 20.0
    max_inclination: float = 30.0
    joint_resolution_linear: float = 0.05
    joint_resolution_rotation: float = 1.0
    calibration_error_bound: float = 0.15
    needle_gauge: str = "18G"

    def __post_init__(self):
        if self.baseline_length <= 0:
            raise ValueError("baseline_length must be positive")
        if not (0.0 < self.max_inclination <= 45.0):
            raise ValueError("max_inclination must be in (0, 45] degrees")
        if self.needle_gauge not in NEEDLE_GAUGES:
            raise ValueError(f"needle_gauge must be one of {NEEDLE_GAUGES}")
        if self.joint_resolution_linear <= 0 or self.joint_resolution_rotation <= 0:
            raise ValueError("joint resolutions must be positive")
        if self.calibration_error_bound < 0:
            raise ValueError("calibration_error_bound must be non-negative")
        # The rear carriage must reach front_travel widened by L*tan(max
        # inclination) on each side, otherwise full-workspace inclination is
        # unreachable.
        reach = self.baseline_length * math.tan(math.radians(self.max_inclination))
        if self.rear_travel.lo > self.front_travel.lo - reach or self.rear_travel.hi < self.front_travel.hi + reach:
            raise ValueError(
                f"rear travel [{self.rear_travel.lo}, {self.rear_travel.hi}] cannot cover front travel "
                f"expanded by {reach:.3f} mm; +/-{self.max_inclination} deg is not reachable everywhere"
            )

    def joint_travels(self) -> dict[str, Travel]:
        return {
            "xf": self.front_travel,
            "yf": self.front_travel,
            "xr": self.rear_travel,
            "yr": self.rear_travel,
            "z_pre": self.z_travel,
            "d_ins": self.insertion_travel,
        }


@dataclass(frozen=True)
class JointState:
    """Positions of the five actuated axes plus the needle roll accumulator.

    ``theta`` is unbounded (continuous rotation during insertion winds it up).
    """

    xf: float = 0.0
    yf: float = 0.0
    xr: float = 0.0
    yr: float = 0.0
    z_pre: float = 0.0
    d_ins: float = 0.0
    theta: float = 0.0

    def validate(self, geom: RobotGeometry) -> None:
        """Raise TravelExceeded naming every linear joint outside its range."""
        bad = []
        for name, travel in geom.joint_travels().items():
            v = getattr(self, name)
            if not travel.contains(v):
                bad.append((name, v, travel.lo, travel.hi))
        if bad:
            raise TravelExceeded(bad)


@dataclass(frozen=True)
class NeedlePose:
    """Clinical parameterization: entry point on the template plane plus
    pitch/yaw inclination of the needle axis."""

    entry_x: float = 0.0
    entry_y: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def validate(self, geom: RobotGeometry) -> None:
        inc = inclination(self.pitch, self.yaw)
        if inc > geom.max_inclination:
            raise InclinationExceeded(inc, geom.max_inclination)


def inclination(pitch: float, yaw: float) -> float:
    """Total angle between the needle axis and the z axis, in degrees.

    Both components must satisfy |angle| < 90 deg.
    """
    if abs(pitch) >= 90.0 or abs(yaw) >= 90.0:
        raise ValueError("pitch and yaw must each be within (-90, 90) degrees")
    tp = math.tan(math.radians(pitch))
    ty = math.tan(math.radians(yaw))
    return math.degrees(math.atan(math.hypot(tp, ty)))


def needle_direction(pose: NeedlePose) -> tuple[float, float, float]:
    """Unit direction of the needle axis, pointing into the patient (+z)."""
    d = (math.tan(math.radians(pose.yaw)), math.tan(math.radians(pose.pitch)), 1.0)
    n = math.sqrt(d[0] * d[0] + d[1] * d[1] + 1.0)
    return (d[0] / n, d[1] / n, 1.0 / n)


def ik_position(pose: NeedlePose, geom: RobotGeometry, base: JointState | None = None) -> JointState:
    """Carriage positions that realize ``pose``; other axes taken from ``base``.

    The front carriage holds the entry point directly; the rear carriage is
    offset by -L*tan(angle) per axis so the support line carries the requested
    direction.
    """
    inc = inclination(pose.pitch, pose.yaw)
    if inc > geom.max_inclination:
        raise InclinationExceeded(inc, geom.max_inclination)
    xf = pose.entry_x
    yf = pose.entry_y
    xr = pose.entry_x - geom.baseline_length * math.tan(math.radians(pose.yaw))
    yr = pose.entry_y - geom.baseline_length * math.tan(math.radians(pose.pitch))
    joints = replace(base or JointState(), xf=xf, yf=yf, xr=xr, yr=yr)
    joints.validate(geom)
    return joints


def fk_position(joints: JointState, geom: RobotGeometry) -> NeedlePose:
    """Inverse of ik_position: pose realized by the carriage positions."""
    joints.validate(geom)
    pitch = math.degrees(math.atan((joints.yf - joints.yr) / geom.baseline_length))
    yaw = math.degrees(math.atan((joints.xf - joints.xr) / geom.baseline_length))
    return NeedlePose(entry_x=joints.xf, entry_y=joints.yf, pitch=pitch, yaw=yaw)


def tip_advance(joints: JointState, geom: RobotGeometry) -> float:
    """Tip position along the needle axis, measured from the template plane."""
    return joints.z_pre + joints.d_ins - geom.guide_standoff


def tip_point(pose: NeedlePose, joints: JointState, geom: RobotGeometry) -> tuple[float, float, float]:
    """3D needle-tip position for a consistent pose/joint pair."""
    u = needle_direction(pose)
    s = tip_advance(joints, geom)
    return (pose.entry_x + u[0] * s, pose.entry_y + u[1] * s, u[2] * s)


def _round_to(value: float, resolution: float) -> float:
    return round(value / resolution) * resolution


def quantize(joints: JointState, geom: RobotGeometry) -> JointState:
    """Snap each joint to its actuator grid (nearest multiple, idempotent)."""
    lin = geom.joint_resolution_linear
    return JointState(
        xf=_round_to(joints.xf, lin),
        yf=_round_to(joints.yf, lin),
        xr=_round_to(joints.xr, lin),
        yr=_round_to(joints.yr, lin),
        z_pre=_round_to(joints.z_pre, lin),
        d_ins=_round_to(joints.d_ins, lin),
        theta=_round_to(joints.theta, geom.joint_resolution_rotation),
    )
