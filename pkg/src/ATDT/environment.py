"""
Catalog of highway environments

Every environment has three lanes, the autonomous car starting in the
center lane, and a single non-autonomous car whose lane, distance and
velocity profile vary over a fixed grid of values.
"""

import itertools
import logging
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .config import SimulationConfig
from .dynamics import HEADING_FORWARD, Array, VehicleState

logger = logging.getLogger(__name__)


class Goal(Enum):
    MERGE_RIGHT = "MergeRight"
    DRIVE_FORWARD = "DriveForward"


class Lane(Enum):
    LEFT = "Left"
    CENTER = "Center"
    RIGHT = "Right"


class Variant(Enum):
    MERGE_AHEAD = "MergeAhead"
    MERGE_BEHIND = "MergeBehind"
    STAY_BEHIND = "StayBehind"
    PASS_LANE = "PassLane"
    AVOID_TAILGATER = "AvoidTailgater"
    SPEED_UP = "SpeedUp"
    OTHER_MERGE = "OtherMerge"
    OTHER_FORWARD = "OtherForward"


class EnvClass(Enum):
    MERGING = "Merging"
    BRAKING = "Braking"
    TAILGATING = "Tailgating"
    OTHER = "Other"

    @property
    def strategies(self) -> Tuple[Variant, Variant]:
        """The two trajectory strategies of this class"""
        return _STRATEGIES[self]

    @property
    def informative(self) -> bool:
        return self is not EnvClass.OTHER


_STRATEGIES: Dict[EnvClass, Tuple[Variant, Variant]] = {
    EnvClass.MERGING: (Variant.MERGE_AHEAD, Variant.MERGE_BEHIND),
    EnvClass.BRAKING: (Variant.STAY_BEHIND, Variant.PASS_LANE),
    EnvClass.TAILGATING: (Variant.AVOID_TAILGATER, Variant.SPEED_UP),
    EnvClass.OTHER: (Variant.OTHER_MERGE, Variant.OTHER_FORWARD),
}

# The eight strategy clusters, in the order of the 2x4 class grid
CLUSTERS: Tuple[Tuple[EnvClass, Variant], ...] = tuple(
    (env_class, variant)
    for env_class in EnvClass
    for variant in env_class.strategies
)

# The grid of environment parameters
GOALS = (Goal.MERGE_RIGHT, Goal.DRIVE_FORWARD)
OFFSETS = tuple(range(-240, -99, 20)) + tuple(range(100, 241, 20))
LANES = (Lane.LEFT, Lane.CENTER, Lane.RIGHT)
INITIAL_VELOCITIES = tuple(range(20, 81, 5))
ACCELERATION_TIMES = (0.0, 0.5, 1.0, 1.5, 2.0)
FINAL_VELOCITIES = (20, 30, 70, 80)

# (acceleration time, final velocity), a car that does not accelerate has
# no final velocity
AccelerationProfile = Tuple[float, Optional[int]]
ACCELERATION_PROFILES: Tuple[AccelerationProfile, ...] = ((0.0, None),) + tuple(
    (accel_time, vf) for accel_time in ACCELERATION_TIMES[1:] for vf in FINAL_VELOCITIES
)


class EnvironmentSpec(NamedTuple):
    goal: Goal
    offset: int
    lane: Lane
    v0: int
    accel_time: float = 0.0
    vf: Optional[int] = None

    def validate(self) -> None:
        """Validate that every field comes from the parameter grid"""
        if self.goal not in GOALS:
            raise ValueError(f"Unknown goal: {self.goal}")
        if self.offset not in OFFSETS:
            raise ValueError(f"Offset not in the parameter grid: {self.offset}")
        if self.lane not in LANES:
            raise ValueError(f"Unknown lane: {self.lane}")
        if self.v0 not in INITIAL_VELOCITIES:
            raise ValueError(f"Initial velocity not in the grid: {self.v0}")
        if (self.accel_time, self.vf) not in ACCELERATION_PROFILES:
            msg = f"Invalid acceleration profile: {self.accel_time=}, {self.vf=}"
            raise ValueError(msg)

    def __str__(self) -> str:
        vf = "-" if self.vf is None else str(self.vf)
        return ", ".join(
            map(
                str,
                (
                    self.goal.value,
                    self.offset,
                    self.lane.value,
                    self.v0,
                    self.accel_time,
                    vf,
                ),
            )
        )


def enumerate_environments() -> List[EnvironmentSpec]:
    """All environment specifications, in canonical order

    >>> specs = enumerate_environments()
    >>> len(specs)
    21216
    >>> specs[0]  # doctest: +NORMALIZE_WHITESPACE
    EnvironmentSpec(goal=<Goal.MERGE_RIGHT: 'MergeRight'>, offset=-240,
        lane=<Lane.LEFT: 'Left'>, v0=20, accel_time=0.0, vf=None)
    """
    return [
        EnvironmentSpec(goal, offset, lane, v0, accel_time, vf)
        for goal, offset, lane, v0, (accel_time, vf) in itertools.product(
            GOALS, OFFSETS, LANES, INITIAL_VELOCITIES, ACCELERATION_PROFILES
        )
    ]


def classify_environment(spec: EnvironmentSpec) -> EnvClass:
    """Determine the class of an environment

    >>> classify_environment(EnvironmentSpec(Goal.DRIVE_FORWARD, 100, Lane.CENTER, 20))
    <EnvClass.BRAKING: 'Braking'>
    """
    if spec.lane is Lane.RIGHT and spec.goal is Goal.MERGE_RIGHT:
        return EnvClass.MERGING
    if spec.lane is Lane.CENTER and spec.goal is Goal.DRIVE_FORWARD:
        if spec.offset > 0:
            return EnvClass.BRAKING
        if spec.offset < 0:
            return EnvClass.TAILGATING
    return EnvClass.OTHER


def census(specs: List[EnvironmentSpec]) -> Dict[EnvClass, int]:
    """Count the environments in each class"""
    counts = {env_class: 0 for env_class in EnvClass}
    for spec in specs:
        counts[classify_environment(spec)] += 1
    return counts


def lane_centers(lane_width: float) -> Dict[Lane, float]:
    """Lateral position of each lane center, the center lane is at x=0"""
    return {Lane.LEFT: -lane_width, Lane.CENTER: 0.0, Lane.RIGHT: lane_width}


def velocity_profile(spec: EnvironmentSpec, T: int, dt: float) -> Array:
    """Velocity of the non-autonomous car at every step

    >>> spec = EnvironmentSpec(Goal.MERGE_RIGHT, 100, Lane.RIGHT, 20, 2.0, 80)
    >>> float(velocity_profile(spec, 50, 0.1)[10])
    50.0
    """
    t = np.arange(T + 1) * dt
    if spec.accel_time == 0 or spec.vf is None:
        return np.full(T + 1, float(spec.v0))
    ramp = np.minimum(t / spec.accel_time, 1.0)
    return spec.v0 + (spec.vf - spec.v0) * ramp


def other_car_trajectory(
    spec: EnvironmentSpec,
    T: int,
    dt: float,
    lane_width: float = 4.0,
    robot_y0: float = 0.0,
) -> Array:
    """Trajectory of the non-autonomous car

    Returns an array of shape (T+1, 4) with columns x, y, heading and v.
    The car keeps to the center of its lane and its position accumulates
    explicit Euler steps of the velocity, the same scheme the vehicle model
    uses.
    """
    v = velocity_profile(spec, T, dt)
    travelled = np.cumsum(v[:-1] * dt)
    y = robot_y0 + spec.offset + np.concatenate(([0.0], travelled))
    x = np.full(T + 1, lane_centers(lane_width)[spec.lane])
    heading = np.full(T + 1, HEADING_FORWARD)
    return np.column_stack((x, y, heading, v))


class Environment:
    """An environment specification placed on the road"""

    def __init__(
        self,
        spec: EnvironmentSpec,
        lane_width: float,
        robot_start: VehicleState,
        other_car: Array,
        horizon: int,
        dt: float,
        goal_y: float,
    ) -> None:
        self.spec = spec
        self.lane_width = lane_width
        self.lane_centers = lane_centers(lane_width)
        self.robot_start = robot_start
        self.other_car = other_car
        self.other_car.setflags(write=False)
        self.horizon = horizon
        self.dt = dt
        self.goal_y = goal_y
        self.env_class = classify_environment(spec)

        self.validate()

    def validate(self) -> None:
        if self.lane_of(self.robot_start.x) is not Lane.CENTER:
            raise ValueError("The autonomous car must start in the center lane")
        if self.other_car.shape != (self.horizon + 1, 4):
            msg = f"Other car trajectory does not match the horizon: {self.other_car.shape=}"
            raise ValueError(msg)

    def lane_of(self, x: float) -> Lane:
        """The lane whose center is closest to x"""
        return min(LANES, key=lambda lane: abs(self.lane_centers[lane] - x))

    def occupies(self, lane: Lane, x: float) -> bool:
        """Whether a car at lateral position x is inside the lane"""
        return bool(abs(x - self.lane_centers[lane]) < self.lane_width / 4)

    def __repr__(self) -> str:
        return f"Environment({self.spec}, {self.env_class.value})"


def instantiate(
    spec: EnvironmentSpec, config: SimulationConfig = SimulationConfig()
) -> Environment:
    """Place an environment specification on the road"""
    spec.validate()
    robot_start = VehicleState(0.0, 0.0, HEADING_FORWARD, config.robot_v0, 0.0)
    other_car = other_car_trajectory(
        spec,
        config.horizon,
        config.dt,
        lane_width=config.lane_width,
        robot_y0=robot_start.y,
    )
    return Environment(
        spec=spec,
        lane_width=config.lane_width,
        robot_start=robot_start,
        other_car=other_car,
        horizon=config.horizon,
        dt=config.dt,
        goal_y=robot_start.y + config.goal_lead,
    )
