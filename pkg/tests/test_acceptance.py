"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test prints one ``[ACCEPTANCE] <criterion>: PASS|FAIL`` line (visible
with ``pytest -s`` or on failure). Two criteria are expected to fail; the
measured values and the analysis of why live in the failure messages and in
the project decisions ledger.
"""

import copy
import json
import math
import random
import string
import time
from importlib import resources

import pytest

from brachysim.controller import COMMANDS, Phase, load_transition_table, run_plan
from brachysim.errors import NoAccess, ParseError, TravelExceeded, ValidationError
from brachysim.events import replay
from brachysim.kinematics import (
    JointState,
    NeedlePose,
    RobotGeometry,
    fk_position,
    ik_position,
    inclination,
    quantize,
    tip_point,
)
from brachysim.plan import MotionProfile, Rotation, parse_plan, serialize_plan
from brachysim.workspace import (
    ArchObstacle,
    Capsule,
    TemplateGrid,
    grid_to_entry,
    plan_access,
    reachability_map,
)

import oracles
from conftest import make_plan_doc, needle
from test_controller import args_for, controller_in_phase

GEOM = RobotGeometry()


def report(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}{suffix}")


def _insertion_peak(profile: MotionProfile) -> tuple[float, float]:
    """Peak axial force of the reference single-needle insertion, plus the
    wall-clock runtime of the headless run."""
    doc = make_plan_doc([{"id": "n1", "target": {"grid": [6, 6]}, "depth": 20.0, "seeds": []}])
    plan = parse_plan(json.dumps(doc))
    t0 = time.monotonic()
    log, _ = run_plan(plan, profile=profile)
    elapsed = time.monotonic() - t0
    summary = next(e for e in log if e.kind == "needle_summary")
    return summary.data["peak_force"], elapsed


def test_force_modulation_reproduction():
    static, t1 = _insertion_peak(MotionProfile(insertion_speed=1.0))
    rotating, t2 = _insertion_peak(
        MotionProfile(insertion_speed=1.0, rotation=Rotation(mode="continuous", omega=10.0))
    )
    fast, t3 = _insertion_peak(MotionProfile(insertion_speed=5.0))

    rot_reduction = 1.0 - rotating / static
    vel_reduction = 1.0 - fast / static
    ok = (
        abs(rot_reduction - 0.25) <= 0.005
        and abs(vel_reduction - 0.15) <= 0.005
        and max(t1, t2, t3) < 5.0
    )
    report(
        "force-modulation (25% at 10 rps, 15% at 5 vs 1 mm/s)",
        ok,
        f"rotation {rot_reduction * 100:.2f}%, speed {vel_reduction * 100:.2f}%, "
        f"slowest run {max(t1, t2, t3):.2f} s",
    )
    assert abs(rot_reduction - 0.25) <= 0.005
    assert abs(vel_reduction - 0.15) <= 0.005
    assert max(t1, t2, t3) < 5.0


def test_workspace_coverage():
    grid = TemplateGrid()
    holes_ok = True
    for col in range(grid.holes_per_axis):
        for row in range(grid.holes_per_axis):
            x, y = grid_to_entry(col, row, grid)
            try:
                ik_position(NeedlePose(x, y, 0.0, 0.0), GEOM)
            except Exception:
                holes_ok = False

    reach = reachability_map(GEOM, step=2.5)
    xs = [k[0] for k, v in reach.items() if v is not None]
    ys = [k[1] for k, v in reach.items() if v is not None]
    bbox = (max(xs) - min(xs), max(ys) - min(ys))
    center = reach[(0.0, 0.0)]

    ok = holes_ok and bbox == (105.0, 105.0) and center == 30.0
    report(
        "workspace (169 holes at 0 deg, 105x105 mm envelope, 30 deg at center)",
        ok,
        f"bbox {bbox[0]:g}x{bbox[1]:g} mm, center max {center:g} deg",
    )
    assert holes_ok
    assert bbox == (105.0, 105.0)
    assert center == 30.0


def test_placement_precision_monte_carlo():
    rng = random.Random(20260810)
    bound = GEOM.calibration_error_bound
    L = GEOM.baseline_length
    worst = 0.0
    t0 = time.monotonic()
    n = 10_000
    for _ in range(n):
        while True:
            pose = NeedlePose(
                rng.uniform(GEOM.front_travel.lo, GEOM.front_travel.hi),
                rng.uniform(GEOM.front_travel.lo, GEOM.front_travel.hi),
                rng.uniform(-GEOM.max_inclination, GEOM.max_inclination),
                rng.uniform(-GEOM.max_inclination, GEOM.max_inclination),
            )
            if inclination(pose.pitch, pose.yaw) > GEOM.max_inclination:
                continue
            try:
                carriages = ik_position(pose, GEOM)
                break
            except TravelExceeded:
                continue
        ideal_joints = JointState(
            carriages.xf, carriages.yf, carriages.xr, carriages.yr,
            z_pre=GEOM.guide_standoff, d_ins=rng.uniform(0.0, GEOM.insertion_travel.hi),
        )
        ideal_tip = tip_point(pose, ideal_joints, GEOM)
        q = quantize(ideal_joints, GEOM)
        actual = JointState(
            q.xf + rng.uniform(-bound, bound), q.yf + rng.uniform(-bound, bound),
            q.xr + rng.uniform(-bound, bound), q.yr + rng.uniform(-bound, bound),
            q.z_pre + rng.uniform(-bound, bound), q.d_ins + rng.uniform(-bound, bound),
        )
        actual_pose = NeedlePose(
            actual.xf, actual.yf,
            math.degrees(math.atan((actual.yf - actual.yr) / L)),
            math.degrees(math.atan((actual.xf - actual.xr) / L)),
        )
        worst = max(worst, math.dist(ideal_tip, tip_point(actual_pose, actual, GEOM)))
    elapsed = time.monotonic() - t0

    ok = worst <= 1.0 and 0.3 <= worst and elapsed < 30.0
    report(
        "placement precision (<= 1.0 mm, observed max in [0.3, 1.0] mm)",
        ok,
        f"worst {worst:.3f} mm over {n} samples in {elapsed:.1f} s",
    )
    assert worst <= 1.0
    assert 0.3 <= worst <= 1.0
    assert elapsed < 30.0


def test_ik_fk_oracle():
    rng = random.Random(91)
    worst_round_trip = 0.0
    worst_line = 0.0
    for _ in range(10_000):
        while True:
            pose = NeedlePose(
                rng.uniform(GEOM.front_travel.lo, GEOM.front_travel.hi),
                rng.uniform(GEOM.front_travel.lo, GEOM.front_travel.hi),
                rng.uniform(-GEOM.max_inclination, GEOM.max_inclination),
                rng.uniform(-GEOM.max_inclination, GEOM.max_inclination),
            )
            if inclination(pose.pitch, pose.yaw) > GEOM.max_inclination:
                continue
            try:
                joints = ik_position(pose, GEOM)
                break
            except TravelExceeded:
                continue
        back = fk_position(joints, GEOM)
        worst_round_trip = max(
            worst_round_trip,
            abs(back.entry_x - pose.entry_x), abs(back.entry_y - pose.entry_y),
            abs(back.pitch - pose.pitch), abs(back.yaw - pose.yaw),
        )
        direction = oracles.direction_from_angles(pose.pitch, pose.yaw)
        entry = (pose.entry_x, pose.entry_y, 0.0)
        worst_line = max(
            worst_line,
            oracles.point_line_distance((joints.xf, joints.yf, 0.0), entry, direction),
            oracles.point_line_distance((joints.xr, joints.yr, -GEOM.baseline_length), entry, direction),
        )
    ok = worst_round_trip < 1e-9 and worst_line < 1e-9
    report(
        "ik/fk oracle (10,000 round trips within 1e-9; support points on line)",
        ok,
        f"worst round trip {worst_round_trip:.2e}, worst line distance {worst_line:.2e}",
    )
    assert worst_round_trip < 1e-9
    assert worst_line < 1e-9


def test_safety_release():
    rng = random.Random(7)
    runs = 100
    tripped = 0
    frozen_ok = True
    worst_overlap = 0.0
    for _ in range(runs):
        bone_depth = rng.uniform(10.0, 140.0)
        doc = make_plan_doc(
            [{"id": "n1", "target": {"grid": [6, 6]}, "depth": 149.0,
              "profile": {"speed": 10.0}, "seeds": []}],
            obstacles={"bone": [{"depth": bone_depth}]},
        )
        _, c = run_plan(parse_plan(json.dumps(doc)))
        if c.phase is not Phase.SAFETY_TRIPPED:
            continue
        tripped += 1
        worst_overlap = max(worst_overlap, c.tissue_state.tip_depth - bone_depth)
        depth_at_trip = c.tissue_state.tip_depth
        for _ in range(100):
            c.tick()
        if c.tissue_state.tip_depth != depth_at_trip:
            frozen_ok = False

    ok = tripped == runs and frozen_ok and worst_overlap <= 0.4
    report(
        "safety release (trips within 0.4 mm of bone contact, zero advance after)",
        ok,
        f"tripped {tripped}/{runs}, zero advance after trip: {frozen_ok}, "
        f"worst overlap {worst_overlap:.3f} mm",
    )
    assert tripped == runs, "a run failed to trip on bone contact"
    assert frozen_ok, "needle advanced after the trip sample"
    # With the specified defaults (release at 8 N, bone stiffness 10 N/mm)
    # the trip overlap is (8 - ambient)/(k_bone + mu*modulation); the ambient
    # cutting force over most of the travel is 1-4 N, so shallow and
    # mid-depth contacts trip 0.4-0.75 mm past contact. The 0.4 mm bound
    # only holds where the ambient force already exceeds ~4 N (bone deeper
    # than ~105 mm). See the decisions ledger.
    assert worst_overlap <= 0.4, (
        f"worst trip overlap {worst_overlap:.3f} mm exceeds the 0.4 mm criterion; "
        f"consistent with (8 - ambient)/k_bone for ambient < 4 N"
    )


def test_arch_avoidance():
    capsule = Capsule((-40.0, 20.0, 40.0), (40.0, 20.0, 40.0), 5.0)
    arch = ArchObstacle((capsule,))
    target = (0.0, 25.0, 60.0)

    sol = plan_access(target, arch, GEOM, min_clearance=0.5)
    entry = (sol.pose.entry_x, sol.pose.entry_y, 0.0)
    sampled = oracles.sampled_clearance(
        entry,
        oracles.direction_from_angles(sol.pose.pitch, sol.pose.yaw),
        math.dist(entry, target),
        [(capsule.a, capsule.b, capsule.radius)],
    )

    arch8 = ArchObstacle((Capsule((-40.0, 20.0, 40.0), (40.0, 20.0, 40.0), 8.0),))
    try:
        plan_access(target, arch8, GEOM, min_clearance=1.0)
        r8_no_access = False
    except NoAccess:
        r8_no_access = True

    inclination_matches = abs(sol.inclination - 27.7) <= 0.05
    clearance_ok = sampled >= 0.5 - 1e-6
    ok = inclination_matches and clearance_ok and r8_no_access
    report(
        "arch avoidance (27.7 deg worked scenario, r=8 NoAccess)",
        ok,
        f"planner inclination {sol.inclination:.3f} deg, oracle clearance {sampled:.3f} mm, "
        f"r=8 NoAccess: {r8_no_access}",
    )
    # Under the exact capsule-distance clearance this scenario's true
    # minimal-inclination route tips 1.44 deg down and passes above the
    # capsule (the 27.7 deg below-route actually penetrates it by 0.13 mm;
    # the r=8 variant admits an 11.85 deg above-route). The planner result
    # is verified against the dense-sampling oracle in test_workspace; the
    # expected values here are unattainable as stated. See the ledger.
    assert clearance_ok, f"planner clearance {sampled:.3f} mm below the 0.5 mm minimum"
    assert inclination_matches, (
        f"planner minimal inclination {sol.inclination:.3f} deg != 27.7 +/- 0.05 deg"
    )
    assert r8_no_access, "r=8 variant found an access route within the inclination limit"


def test_determinism_and_replay():
    data = resources.files("brachysim").joinpath("data/demo_three_needle.json").read_bytes()
    plan = parse_plan(data)
    assert len(plan.needles) == 3

    log1, c1 = run_plan(plan)
    log2, c2 = run_plan(plan)
    identical = log1.to_ndjson() == log2.to_ndjson()

    recorded = log1.events[-1].data["sha256"]
    replayed = replay(log1.to_ndjson())
    digest_ok = replayed == recorded

    ok = identical and digest_ok and c1.phase is Phase.COMPLETE
    report(
        "determinism & replay (byte-identical logs, digest match)",
        ok,
        f"log {len(log1.to_ndjson())} bytes, digest {recorded[:12]}...",
    )
    assert identical
    assert digest_ok
    assert c1.phase is Phase.COMPLETE and c2.phase is Phase.COMPLETE


def test_plan_format():
    data = resources.files("brachysim").joinpath("data/demo_three_needle.json").read_bytes()
    fixpoint = serialize_plan(parse_plan(data)) == data

    rng = random.Random(31337)
    base = data.decode()
    crashes = 0
    cases = 1000
    for _ in range(cases):
        mode = rng.randrange(4)
        if mode == 0:
            blob = bytes(rng.randrange(256) for _ in range(rng.randrange(1, 300)))
        elif mode == 1:
            blob = base[: rng.randrange(len(base))].encode()
        elif mode == 2:
            chars = list(base)
            for _ in range(rng.randrange(1, 8)):
                chars[rng.randrange(len(chars))] = rng.choice(string.printable)
            blob = "".join(chars).encode()
        else:
            blob = json.dumps(_random_json(rng, 3)).encode()
        try:
            parse_plan(blob)
        except (ParseError, ValidationError):
            pass
        except Exception:
            crashes += 1

    ok = fixpoint and crashes == 0
    report(
        "plan format (canonical fixpoint, 1000-case fuzz structured errors only)",
        ok,
        f"fixpoint: {fixpoint}, crashes: {crashes}/{cases}",
    )
    assert fixpoint
    assert crashes == 0


def _random_json(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        return rng.choice([None, True, False, rng.randrange(-100, 100), rng.random() * 100,
                           "".join(rng.choices(string.ascii_letters, k=5))])
    if rng.random() < 0.5:
        return [_random_json(rng, depth - 1) for _ in range(rng.randrange(4))]
    return {"".join(rng.choices(string.ascii_letters, k=4)): _random_json(rng, depth - 1)
            for _ in range(rng.randrange(4))}


def test_workflow_conformance():
    table = load_transition_table()
    snapshots = {phase: controller_in_phase(phase) for phase in Phase}
    mismatches = []
    e_stop_everywhere = True
    for phase in Phase:
        for cmd in COMMANDS:
            c = copy.deepcopy(snapshots[phase])
            expected = cmd in table["accept"][phase.value]
            got = c.handle_command(cmd, args_for(cmd)).ok
            if got != expected:
                mismatches.append((phase.value, cmd, expected, got))
            if cmd == "e_stop" and not got:
                e_stop_everywhere = False

    ok = not mismatches and e_stop_everywhere
    report(
        "workflow (transition-table conformance, e_stop accepted in all phases)",
        ok,
        f"{len(Phase) * len(COMMANDS)} pairs checked, {len(mismatches)} mismatches",
    )
    assert not mismatches, f"table mismatches: {mismatches}"
    assert e_stop_everywhere
