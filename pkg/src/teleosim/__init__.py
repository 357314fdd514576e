"""State-streaming teleoperation simulation with demonstration logging."""

from .geometry import Transform
from .hands import Calibration, HandFrame, TargetSet, hand_template, map_hand_to_targets
from .ik import IkParams, VelocityCommand, integrate, solve_velocity, velocity_bounds
from .kinematics import (
    CollisionReport,
    forward_kinematics,
    min_self_distance,
    site_jacobian,
)
from .model import ModelError, RobotModel, SceneSpec
from .parsing import ParseError, parse_robot, parse_scene
from .qp import QpError, QpInfeasibleError, QpResult, solve_qp

__version__ = "0.1.0"

__all__ = [
    "Calibration",
    "CollisionReport",
    "HandFrame",
    "IkParams",
    "ModelError",
    "ParseError",
    "QpError",
    "QpInfeasibleError",
    "QpResult",
    "RobotModel",
    "SceneSpec",
    "TargetSet",
    "Transform",
    "VelocityCommand",
    "forward_kinematics",
    "hand_template",
    "integrate",
    "map_hand_to_targets",
    "min_self_distance",
    "parse_robot",
    "parse_scene",
    "site_jacobian",
    "solve_qp",
    "solve_velocity",
    "velocity_bounds",
]
