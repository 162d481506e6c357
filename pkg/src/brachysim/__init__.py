"""Simulation stack for a template-replacing brachytherapy needle-insertion robot.

Layers, bottom up: closed-form kinematics of the rail parallelogram,
template-grid / pubic-arch workspace planning, a calibrated needle-tissue
force model, the mechanical safety release, the procedure state machine with
its fixed-step simulation core, plan/log file handling, and a local HTTP
control service for an operator console.
"""

from .errors import (
    BrachyError,
    DigestMismatch,
    InclinationExceeded,
    IndexOutOfGrid,
    NoAccess,
    NotAtHome,
    NotPermitted,
    ParseError,
    RunFailure,
    TravelExceeded,
    TruncatedLog,
    ValidationError,
)
from .kinematics import (
    JointState,
    NeedlePose,
    RobotGeometry,
    Travel,
    fk_position,
    ik_position,
    inclination,
    needle_direction,
    quantize,
    tip_point,
)
from .workspace import (
    AccessSolution,
    ArchObstacle,
    BoneObstacle,
    Capsule,
    TemplateGrid,
    clearance,
    grid_to_entry,
    plan_access,
    reachability_map,
)
from .tissue import (
    TissueParams,
    TissueState,
    axial_force,
    bone_contact_force,
    rotation_factor,
    seed_offset,
    velocity_factor,
)
from .interlock import EngagementState, EngagementStatus, manual_retract, rehome
from .plan import (
    MotionProfile,
    NeedleTask,
    Plan,
    Rotation,
    SeedSpec,
    apply_prostate_shift,
    parse_plan,
    serialize_plan,
)
from .config import SimConfig, load_config
from .controller import Controller, Phase, TelemetryFrame, run_plan
from .events import EventLog, ProcedureEvent, replay

__version__ = "0.1.0"
