"""Template-grid mapping, reachability analysis and pubic-arch avoidance.

Obstacles are capsules: a 3D axis segment swept by a radius. Clearance of a
needle path is the exact minimum segment-to-segment distance minus the
capsule radius, so tangency reads as zero and penetration as negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import IndexOutOfGrid, NoAccess, TravelExceeded
from .kinematics import NeedlePose, RobotGeometry, ik_position, inclination, needle_direction

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class TemplateGrid:
    """The hole pattern of the manual template this robot replaces."""

    spacing: float = 5.0
    extent: float = 60.0

    def __post_init__(self):
        if self.spacing <= 0 or self.extent <= 0:
            raise ValueError("spacing and extent must be positive")
        steps = self.extent / self.spacing
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("extent must be an integer multiple of spacing")

    @property
    def holes_per_axis(self) -> int:
        return int(round(self.extent / self.spacing)) + 1

    @property
    def hole_count(self) -> int:
        return self.holes_per_axis ** 2


def grid_to_entry(col: int, row: int, grid: TemplateGrid | None = None) -> tuple[float, float]:
    """Template-plane coordinates of hole (col, row); (0, 0) is bottom-left."""
    grid = grid or TemplateGrid()
    n = grid.holes_per_axis
    if not (0 <= col < n and 0 <= row < n):
        raise IndexOutOfGrid(f"hole ({col}, {row}) outside {n}x{n} grid")
    half = grid.extent / 2.0
    return (-half + col * grid.spacing, -half + row * grid.spacing)


@dataclass(frozen=True)
class Capsule:
    """Axis segment from ``a`` to ``b`` swept by ``radius`` (all mm)."""

    a: Vec3
    b: Vec3
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True)
class ArchObstacle:
    """The pubic arch, modeled as a set of capsules."""

    capsules: tuple[Capsule, ...] = ()

    @staticmethod
    def demo() -> "ArchObstacle":
        return ArchObstacle((Capsule((-40.0, 20.0, 40.0), (40.0, 20.0, 40.0), 5.0),))


@dataclass(frozen=True)
class BoneObstacle:
    """Bone surface crossing the insertion path at ``depth`` mm past the
    tissue plane; penetration produces a stiff reaction force."""

    depth: float

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("bone depth must be non-negative")


@dataclass(frozen=True)
class AccessSolution:
    pose: NeedlePose
    inclination: float
    clearance: float


def _seg_seg_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> float:
    """Minimum distance between segments [p1,q1] and [p2,q2] (closed form)."""
    d1 = (q1[0] - p1[0], q1[1] - p1[1], q1[2] - p1[2])
    d2 = (q2[0] - p2[0], q2[1] - p2[1], q2[2] - p2[2])
    r = (p1[0] - p2[0], p1[1] - p2[1], p1[2] - p2[2])
    a = d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]
    e = d2[0] * d2[0] + d2[1] * d2[1] + d2[2] * d2[2]
    f = d2[0] * r[0] + d2[1] * r[1] + d2[2] * r[2]
    eps = 1e-12
    if a <= eps and e <= eps:
        return math.dist(p1, p2)
    if a <= eps:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = d1[0] * r[0] + d1[1] * r[1] + d1[2] * r[2]
        if e <= eps:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2]
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t, s = 1.0, min(1.0, max(0.0, (b - c) / a))
    c1 = (p1[0] + d1[0] * s, p1[1] + d1[1] * s, p1[2] + d1[2] * s)
    c2 = (p2[0] + d2[0] * t, p2[1] + d2[1] * t, p2[2] + d2[2] * t)
    return math.dist(c1, c2)


def clearance(pose: NeedlePose, length: float, arch: ArchObstacle) -> float:
    """Worst-case margin between the needle segment and the arch, in mm.

    Negative values mean the needle penetrates a capsule. An empty arch has
    infinite clearance.
    """
    if length <= 0:
        raise ValueError("needle length must be positive")
    u = needle_direction(pose)
    start = (pose.entry_x, pose.entry_y, 0.0)
    end = (start[0] + u[0] * length, start[1] + u[1] * length, start[2] + u[2] * length)
    best = math.inf
    for cap in arch.capsules:
        d = _seg_seg_distance(start, end, cap.a, cap.b) - cap.radius
        best = min(best, d)
    return best


def max_inclination_at(geom: RobotGeometry, x: float, y: float) -> float | None:
    """Largest feasible inclination at entry (x, y), or None if unreachable.

    Inclination candidates descend from the geometry limit in 1 deg steps;
    each is feasible when some direction on a 1 deg azimuth sweep keeps the
    rear carriage in travel. Entries outside front travel are unreachable.
    """
    ft, rt, L = geom.front_travel, geom.rear_travel, geom.baseline_length
    if not (ft.contains(x) and ft.contains(y)):
        return None
    phi = int(math.floor(geom.max_inclination))
    candidates = [geom.max_inclination] + [float(c) for c in range(phi, -1, -1)]
    for cand in candidates:
        r = L * math.tan(math.radians(cand))
        for psi_deg in range(0, 360):
            psi = math.radians(psi_deg)
            if rt.contains(x - r * math.cos(psi)) and rt.contains(y - r * math.sin(psi)):
                return cand
    return None


def reachability_map(
    geom: RobotGeometry, step: float = 2.5
) -> dict[tuple[float, float], float | None]:
    """max_inclination_at sampled over the front-travel box on a ``step`` grid."""
    if step <= 0:
        raise ValueError("step must be positive")
    ft = geom.front_travel
    xs = []
    v = ft.lo
    while v <= ft.hi + 1e-9:
        xs.append(round(v, 9))
        v += step
    return {(x, y): max_inclination_at(geom, x, y) for y in xs for x in xs}


def format_reachability(reach: dict[tuple[float, float], float | None]) -> str:
    """Render a reachability map as a text grid.

    Rows run from the largest y (top) to the smallest (bottom); columns from
    the smallest x (left) to the largest (right). Cells hold the maximum
    inclination in degrees, or "X" for unreachable points.
    """
    xs = sorted({k[0] for k in reach})
    ys = sorted({k[1] for k in reach}, reverse=True)
    lines = ["# reachability grid: rows y=max..min (top to bottom), cols x=min..max"]
    lines.append("# x: " + " ".join(f"{x:g}" for x in xs))
    for y in ys:
        cells = []
        for x in xs:
            v = reach[(x, y)]
            cells.append("X" if v is None else f"{v:g}")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def _pose_through_target(target: Vec3, pitch: float, yaw: float) -> NeedlePose:
    """Entry point on the template plane for a needle hitting ``target`` with
    the given direction."""
    tx, ty, tz = target
    return NeedlePose(
        entry_x=tx - tz * math.tan(math.radians(yaw)),
        entry_y=ty - tz * math.tan(math.radians(pitch)),
        pitch=pitch,
        yaw=yaw,
    )


def _access_feasible(
    target: Vec3, pitch: float, yaw: float, arch: ArchObstacle, geom: RobotGeometry, min_clearance: float
) -> AccessSolution | None:
    if inclination(pitch, yaw) > geom.max_inclination:
        return None
    pose = _pose_through_target(target, pitch, yaw)
    try:
        ik_position(pose, geom)
    except TravelExceeded:
        return None
    length = math.dist((pose.entry_x, pose.entry_y, 0.0), target)
    c = clearance(pose, length, arch) if arch.capsules else math.inf
    if c < min_clearance:
        return None
    return AccessSolution(pose=pose, inclination=inclination(pitch, yaw), clearance=c)


def plan_access(
    target: Vec3,
    arch: ArchObstacle,
    geom: RobotGeometry,
    min_clearance: float = 0.5,
) -> AccessSolution:
    """Minimal-inclination needle pose through ``target`` clearing the arch.

    Search is a 0.5 deg grid over (pitch, yaw), then bisection along the best
    candidate's azimuth down to 0.01 deg. The horizontal pose is returned
    outright when it is already feasible. Raises NoAccess when no direction
    within the inclination limit satisfies the clearance and travel limits.
    """
    if target[2] <= 0:
        raise ValueError("target must lie in front of the template plane (z > 0)")

    flat = _access_feasible(target, 0.0, 0.0, arch, geom, min_clearance)
    if flat is not None:
        return flat

    coarse = 0.5
    limit = geom.max_inclination
    n = int(math.ceil(limit / coarse))
    best: tuple[float, float, float] | None = None  # (inclination, pitch, yaw)
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            pitch = i * coarse
            yaw = j * coarse
            if i == 0 and j == 0:
                continue
            if inclination(pitch, yaw) > limit:
                continue
            sol = _access_feasible(target, pitch, yaw, arch, geom, min_clearance)
            if sol is not None and (best is None or sol.inclination < best[0]):
                best = (sol.inclination, pitch, yaw)
    if best is None:
        raise NoAccess(
            f"no direction within {limit:g} deg reaches {target} with clearance >= {min_clearance:g} mm"
        )

    # Refine along the azimuth of the best grid candidate: the largest known
    # infeasible inclination is one coarse step below the winner.
    _, bp, by = best
    tp, ty = math.tan(math.radians(bp)), math.tan(math.radians(by))
    psi = math.atan2(tp, ty)
    hi = inclination(bp, by)
    lo = max(0.0, hi - coarse)

    def at(phi: float) -> AccessSolution | None:
        t = math.tan(math.radians(phi))
        pitch = math.degrees(math.atan(t * math.sin(psi)))
        yaw = math.degrees(math.atan(t * math.cos(psi)))
        return _access_feasible(target, pitch, yaw, arch, geom, min_clearance)

    best_sol = at(hi)
    assert best_sol is not None
    while hi - lo > 0.01:
        mid = (hi + lo) / 2.0
        sol = at(mid)
        if sol is not None:
            hi, best_sol = mid, sol
        else:
            lo = mid
    return best_sol
