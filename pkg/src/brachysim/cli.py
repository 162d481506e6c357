"""Command-line interface.

Exit code 0 on success; on failure a single machine-parseable line
``error: <Kind>: <detail>`` goes to stderr and the exit code is nonzero.
Configuration precedence: built-in defaults < --config file < plan
overrides < --set flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from .config import SimConfig, load_config
from .controller import run_plan
from .errors import BrachyError
from .events import replay
from .kinematics import JointState, NeedlePose, fk_position, ik_position, tip_point
from .plan import MotionProfile, Rotation, parse_plan
from .workspace import format_reachability, reachability_map


def _parse_sets(pairs: list[str]) -> dict[str, Any]:
    """--set section.key=value flags into config override sections."""
    out: dict[str, dict[str, Any]] = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ValueError(f"--set expects section.key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        section, name = key.split(".", 1)
        out.setdefault(section, {})[name] = json.loads(value)
    return out


def _config(args) -> SimConfig:
    overrides = _parse_sets(getattr(args, "set", []) or [])
    return load_config(getattr(args, "config", None), overrides)


def _parse_profile_flag(spec: str) -> MotionProfile:
    """--profile "speed=5,rotation=continuous,omega=10" into a MotionProfile."""
    fields: dict[str, str] = {}
    for item in spec.split(","):
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"--profile expects key=value items, got {item!r}")
        k, v = item.split("=", 1)
        fields[k.strip()] = v.strip()
    speed = float(fields.pop("speed", "5"))
    mode = fields.pop("rotation", "none")
    omega = float(fields.pop("omega", "0"))
    step = float(fields.pop("step", "0"))
    if fields:
        raise ValueError(f"unknown --profile keys: {', '.join(sorted(fields))}")
    return MotionProfile(insertion_speed=speed, rotation=Rotation(mode=mode, omega=omega, step=step))


def _cmd_ik(args) -> int:
    config = _config(args)
    pose = NeedlePose(entry_x=args.entry[0], entry_y=args.entry[1], pitch=args.pitch, yaw=args.yaw)
    joints = ik_position(pose, config.geometry)
    print(json.dumps({"xf": joints.xf, "yf": joints.yf, "xr": joints.xr, "yr": joints.yr}, sort_keys=True))
    return 0


def _cmd_fk(args) -> int:
    config = _config(args)
    joints = JointState(
        xf=args.joints[0], yf=args.joints[1], xr=args.joints[2], yr=args.joints[3],
        z_pre=args.z_pre, d_ins=args.d_ins,
    )
    pose = fk_position(joints, config.geometry)
    tip = tip_point(pose, joints, config.geometry)
    print(json.dumps({
        "entry_x": pose.entry_x, "entry_y": pose.entry_y,
        "pitch": pose.pitch, "yaw": pose.yaw, "tip": list(tip),
    }, sort_keys=True))
    return 0


def _cmd_workspace(args) -> int:
    config = _config(args)
    sys.stdout.write(format_reachability(reachability_map(config.geometry, step=args.step)))
    return 0


def _cmd_plan_validate(args) -> int:
    plan = parse_plan(Path(args.file).read_bytes())
    print(f"ok: {len(plan.needles)} needle(s), version {plan.version}")
    return 0


def _cmd_simulate(args) -> int:
    config = _config(args)
    plan = parse_plan(Path(args.file).read_bytes())
    profile = _parse_profile_flag(args.profile) if args.profile else None
    log, controller = run_plan(plan, profile=profile, config=config)
    out = Path(args.log) if args.log else Path(args.file).with_suffix(".log.ndjson")
    out.write_bytes(log.to_ndjson())
    digest = log.events[-1].data["sha256"]
    print(f"{controller.phase.value} after {controller.tick_count} ticks "
          f"({controller.sim_time:.3f} s sim); log: {out}; digest: {digest}")
    return 0


def _cmd_replay(args) -> int:
    digest = replay(Path(args.log).read_bytes())
    print(f"replay ok; digest: {digest}")
    return 0


def _cmd_serve(args) -> int:
    from .controller import Controller
    from .service import ControlService

    config = _config(args)
    controller = Controller(config)
    if args.plan:
        plan = parse_plan(Path(args.plan).read_bytes())
        result = controller.handle_command("load_plan", {"plan": plan})
        if not result.ok:
            raise BrachyError(f"preload failed: {result.reason}")
    service = ControlService(controller, port=args.port, time_scale=args.time_scale, ui_dir=args.ui)
    service.start()
    print(f"listening on http://127.0.0.1:{service.port}", flush=True)
    try:
        service.wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brachysim")
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ik", help="carriage positions for an entry point and inclination")
    p.add_argument("--entry", nargs=2, type=float, required=True, metavar=("X", "Y"))
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--yaw", type=float, default=0.0)
    p.set_defaults(fn=_cmd_ik)

    p = sub.add_parser("fk", help="needle pose and tip for given joint positions")
    p.add_argument("--joints", nargs=4, type=float, required=True, metavar=("XF", "YF", "XR", "YR"))
    p.add_argument("--z-pre", type=float, default=0.0)
    p.add_argument("--d-ins", type=float, default=0.0)
    p.set_defaults(fn=_cmd_fk)

    p = sub.add_parser("workspace", help="emit the reachability grid as text")
    p.add_argument("--step", type=float, default=2.5)
    p.set_defaults(fn=_cmd_workspace)

    plan_parser = sub.add_parser("plan", help="plan file operations")
    plan_sub = plan_parser.add_subparsers(dest="plan_command", required=True)
    p = plan_sub.add_parser("validate", help="strict-parse and validate a plan file")
    p.add_argument("file")
    p.set_defaults(fn=_cmd_plan_validate)

    p = sub.add_parser("simulate", help="run a plan headlessly and write its event log")
    p.add_argument("file")
    p.add_argument("--profile", default=None,
                   help='insertion profile override, e.g. "speed=5,rotation=continuous,omega=10"')
    p.add_argument("--log", default=None, help="output log path (default: <plan>.log.ndjson)")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("replay", help="re-execute a log and verify its digest")
    p.add_argument("log")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("serve", help="run the operator control service")
    p.add_argument("--port", type=int, default=7430)
    p.add_argument("--plan", default=None, help="plan file to preload")
    p.add_argument("--time-scale", type=float, default=1.0,
                   help="simulated seconds per wall second (pacing only; no effect on results)")
    p.add_argument("--ui", default=None, help="directory of console static files to serve at /ui")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrachyError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
