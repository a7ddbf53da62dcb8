"""Dynamics, control and identification of a three-actuator soft continuum section."""

from .controllers import (
    AdaptivePassivityController,
    ApGains,
    PdflController,
    PdflGains,
    TrajectoryPoint,
)
from .dynamics import DynamicParameters, Model, QuadratureSettings, forward_dynamics
from .identification import ChirpSpec, identify_parameters
from .kinematics import (
    RobotGeometry,
    config_from_actuator,
    config_from_position,
    inverse_kinematics,
    pose_at,
    tip_position,
)
from .simulation import DisturbanceSpec, Scenario, run_scenario, simulate
from .trajectories import CircleSpec, actuator_trajectory, error_report

__version__ = "0.1.0"

__all__ = [
    "AdaptivePassivityController", "ApGains", "ChirpSpec", "CircleSpec", "DisturbanceSpec",
    "DynamicParameters", "Model", "PdflController", "PdflGains", "QuadratureSettings",
    "RobotGeometry", "Scenario", "TrajectoryPoint", "actuator_trajectory", "config_from_actuator",
    "config_from_position", "error_report", "forward_dynamics", "identify_parameters",
    "inverse_kinematics", "pose_at", "run_scenario", "simulate", "tip_position",
]
