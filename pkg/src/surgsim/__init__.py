"""Manipulator dynamics and Lyapunov tracking control with a disturbance observer."""

from .control import ControllerGains, lyapunov_control, workspace_control
from .dynamics import JointState, PlanarArm, SurgicalArm, make_model
from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    LogSchemaError,
    ModelInvariantError,
    ReachabilityError,
    SingularJacobianError,
)
from .signals import DisturbanceSpec, TrajectorySpec
from .sim import Metrics, ScenarioConfig, SimLog, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "ControllerGains",
    "DisturbanceSpec",
    "DivergenceError",
    "JointState",
    "LogSchemaError",
    "Metrics",
    "ModelInvariantError",
    "PlanarArm",
    "ReachabilityError",
    "ScenarioConfig",
    "SimLog",
    "SingularJacobianError",
    "SurgicalArm",
    "TrajectorySpec",
    "lyapunov_control",
    "make_model",
    "run_scenario",
    "workspace_control",
]
