__version__ = "0.1.0-dev"

from .dynamics import Trajectory, VehicleState, ControlInput
from .environment import Environment, EnvironmentSpec

__all__ = [
    "ControlInput",
    "Environment",
    "EnvironmentSpec",
    "Trajectory",
    "VehicleState",
]
