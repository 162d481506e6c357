"""Simulation configuration with layered precedence.

Effective settings are assembled as: built-in defaults < config file
< plan overrides < CLI flags. The full effective snapshot is embedded in
every run log so a replay reconstructs the identical simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ParseError, ValidationError
from .kinematics import RobotGeometry, Travel
from .tissue import TissueParams

_GEOMETRY_TRAVELS = ("front_travel", "rear_travel", "z_travel", "insertion_travel")


@dataclass(frozen=True)
class SimConfig:
    geometry: RobotGeometry = field(default_factory=RobotGeometry)
    tissue: TissueParams = field(default_factory=TissueParams)
    release_threshold: float = 8.0
    dt: float = 0.001               # s, fixed simulation step
    positioning_speed: float = 10.0  # mm/s for carriage and preposition axes
    retraction_speed: float = 5.0    # mm/s
    settle_ticks: int = 10
    rotate_during_retract: bool = False
    # dotted "section.key" names set by CLI flags; plan overrides never
    # displace these (precedence: defaults < file < plan < CLI).
    pinned: frozenset = frozenset()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.release_threshold <= self.tissue.F_punct:
            raise ValueError("release_threshold must exceed the tissue puncture force")

    def with_plan(self, plan) -> "SimConfig":
        """Merge a plan's geometry/tissue/interlock overrides, field-wise,
        beneath any CLI-pinned values."""
        snap = self.snapshot()
        gdoc = snap["geometry"]
        for key, value in plan.geometry.items():
            if f"geometry.{key}" not in self.pinned:
                gdoc[key] = value
        tdoc = snap["tissue"]
        for key, value in plan.tissue.items():
            if f"tissue.{key}" not in self.pinned:
                tdoc[key] = value
        thr = self.release_threshold
        if "release_threshold" in plan.interlock and "interlock.release_threshold" not in self.pinned:
            thr = float(plan.interlock["release_threshold"])
        for key in _GEOMETRY_TRAVELS:
            gdoc[key] = Travel(float(gdoc[key][0]), float(gdoc[key][1]))
        try:
            return replace(
                self,
                geometry=RobotGeometry(**gdoc),
                tissue=TissueParams(**tdoc),
                release_threshold=thr,
            )
        except (TypeError, ValueError) as e:
            raise ValidationError("config", str(e)) from e

    def snapshot(self) -> dict[str, Any]:
        """Full explicit dump for embedding in run logs."""
        g = self.geometry
        return {
            "geometry": {
                "baseline_length": g.baseline_length,
                "front_travel": [g.front_travel.lo, g.front_travel.hi],
                "rear_travel": [g.rear_travel.lo, g.rear_travel.hi],
                "z_travel": [g.z_travel.lo, g.z_travel.hi],
                "insertion_travel": [g.insertion_travel.lo, g.insertion_travel.hi],
                "guide_standoff": g.guide_standoff,
                "max_inclination": g.max_inclination,
                "joint_resolution_linear": g.joint_resolution_linear,
                "joint_resolution_rotation": g.joint_resolution_rotation,
                "calibration_error_bound": g.calibration_error_bound,
                "needle_gauge": g.needle_gauge,
            },
            "tissue": {k: getattr(self.tissue, k) for k in TissueParams.__dataclass_fields__},
            "interlock": {"release_threshold": self.release_threshold},
            "controller": {
                "dt": self.dt,
                "positioning_speed": self.positioning_speed,
                "retraction_speed": self.retraction_speed,
                "settle_ticks": self.settle_ticks,
                "rotate_during_retract": self.rotate_during_retract,
            },
            "pinned": sorted(self.pinned),
        }

    @staticmethod
    def from_snapshot(doc: dict[str, Any]) -> "SimConfig":
        return _build(doc)


def _build(doc: dict[str, Any]) -> SimConfig:
    gdoc = dict(doc.get("geometry", {}))
    for key in _GEOMETRY_TRAVELS:
        if key in gdoc:
            gdoc[key] = Travel(float(gdoc[key][0]), float(gdoc[key][1]))
    tdoc = dict(doc.get("tissue", {}))
    idoc = dict(doc.get("interlock", {}))
    cdoc = dict(doc.get("controller", {}))
    try:
        return SimConfig(
            geometry=RobotGeometry(**gdoc),
            tissue=TissueParams(**tdoc),
            release_threshold=float(idoc.get("release_threshold", 8.0)),
            dt=float(cdoc.get("dt", 0.001)),
            positioning_speed=float(cdoc.get("positioning_speed", 10.0)),
            retraction_speed=float(cdoc.get("retraction_speed", 5.0)),
            settle_ticks=int(cdoc.get("settle_ticks", 10)),
            rotate_during_retract=bool(cdoc.get("rotate_during_retract", False)),
            pinned=frozenset(doc.get("pinned", ())),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError("config", str(e)) from e


def load_config(path: str | Path | None = None, cli_overrides: dict[str, Any] | None = None) -> SimConfig:
    """Build a SimConfig from an optional JSON file plus CLI-level overrides.

    ``cli_overrides`` uses the same section layout as the file and wins over
    it key by key.
    """
    doc: dict[str, Any] = {}
    if path is not None:
        raw = Path(path).read_bytes()
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ParseError(str(path), f"bad config file: {e}") from None
        if not isinstance(doc, dict):
            raise ParseError(str(path), "config root must be an object")
    merged: dict[str, Any] = {k: dict(v) for k, v in doc.items() if isinstance(v, dict)}
    pinned: set[str] = set()
    for section, values in (cli_overrides or {}).items():
        merged.setdefault(section, {}).update(values)
        pinned.update(f"{section}.{key}" for key in values)
    merged["pinned"] = pinned
    return _build(merged)
