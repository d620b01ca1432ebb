"""Reward features of a trajectory and the linear reward on top of them"""

from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .dynamics import Array, DynamicsError, Trajectory
from .environment import Environment, Goal

FEATURE_NAMES = ("proximity", "accel_sq", "speed_dev_sq", "turning", "goal_dist")

# The objective the autonomous car actually optimizes
THETA_STAR: Array = np.array([-64.0, -0.1, -1.0, -0.1, -0.5])
THETA_STAR.setflags(write=False)


class FeatureVector(NamedTuple):
    proximity: float
    accel_sq: float
    speed_dev_sq: float
    turning: float
    goal_dist: float

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        return cls(*(float(value) for value in values))


def as_theta(values: Sequence[float]) -> Array:
    """Validate and convert reward weights"""
    theta = np.array(values, dtype=np.float64)
    if theta.shape != (len(FEATURE_NAMES),):
        raise ValueError(f"Expected {len(FEATURE_NAMES)} weights, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError(f"Reward weights must be finite: {theta}")
    return theta


def proximity_kernel(
    robot_xy: Array, other_xy: Array, other_heading: Array, sigmas: Tuple[float, float]
) -> Array:
    """Gaussian kernel between two positions, elongated along the heading

    >>> float(proximity_kernel(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1), (8, 2))[0])
    1.0
    """
    major, minor = sigmas
    delta = np.asarray(robot_xy) - np.asarray(other_xy)
    cos, sin = np.cos(other_heading), np.sin(other_heading)
    along = delta[:, 0] * cos + delta[:, 1] * sin
    across = -delta[:, 0] * sin + delta[:, 1] * cos
    mahalanobis = along**2 / major**2 + across**2 / minor**2
    kernel: Array = np.exp(-0.5 * mahalanobis)
    return kernel


def feature_vector(
    traj: Trajectory,
    env: Environment,
    gamma: float = 1.0,
    sigmas: Optional[Tuple[float, float]] = None,
) -> FeatureVector:
    """The raw (unnormalized) features of a trajectory in an environment"""
    if traj.horizon != env.horizon or traj.dt != env.dt:
        msg = f"Trajectory ({traj.horizon=}, {traj.dt=}) does not match the environment ({env.horizon=}, {env.dt=})"
        raise DynamicsError(msg)
    if sigmas is None:
        sigmas = (2 * env.lane_width, env.lane_width / 2)

    discount = gamma ** np.arange(traj.horizon + 1)
    x, y, heading, v = traj.x, traj.y, traj.heading, traj.v

    kernel = proximity_kernel(
        traj.states[:, :2], env.other_car[:, :2], env.other_car[:, 2], sigmas
    )
    proximity = np.sum(discount * kernel)

    accel_sq = np.sum(discount[:-1] * np.diff(v) ** 2)
    speed_dev_sq = np.sum(discount * (v - v[0]) ** 2)
    turning = np.sum(discount * np.abs(heading - heading[0]))

    if env.spec.goal is Goal.MERGE_RIGHT:
        shortfall = np.maximum(0.0, (x[0] + env.lane_width) - x)
        goal_dist = np.sum(discount * shortfall**2)
    else:
        goal_dist = max(0.0, env.goal_y - y[-1])

    return FeatureVector(
        float(proximity),
        float(accel_sq),
        float(speed_dev_sq),
        float(turning),
        float(goal_dist),
    )


def feature_bounds(raw: Sequence[FeatureVector]) -> Tuple[Array, Array]:
    """Minimum and maximum of each feature over a set of trajectories"""
    if not raw:
        raise ValueError("Can not normalize an empty set of features")
    table = np.array(raw, dtype=np.float64)
    return table.min(axis=0), table.max(axis=0)


def normalize_array(table: Array, bounds: Tuple[Array, Array]) -> Array:
    """Min-max scale all but the first column of a feature table

    The proximity feature depends on the environment, so it is left alone.
    Columns without spread map to 0.
    """
    low, high = bounds
    normalized = np.array(table, dtype=np.float64)
    for column in range(1, normalized.shape[1]):
        spread = high[column] - low[column]
        if spread > 0:
            normalized[:, column] = (normalized[:, column] - low[column]) / spread
        else:
            normalized[:, column] = 0.0
    return normalized


def normalize_features(
    raw: Sequence[FeatureVector], bounds: Optional[Tuple[Array, Array]] = None
) -> List[FeatureVector]:
    """Normalize the features of a set of trajectories

    >>> raw = [FeatureVector(0.5, 2, 0, 0, 0), FeatureVector(0.5, 6, 0, 0, 0)]
    >>> [f.accel_sq for f in normalize_features(raw)]
    [0.0, 1.0]
    """
    if bounds is None:
        bounds = feature_bounds(raw)
    table = normalize_array(np.array(raw, dtype=np.float64).reshape(-1, 5), bounds)
    return [FeatureVector.from_array(row) for row in table]


def reward(theta: Sequence[float], f: Sequence[float]) -> float:
    """Linear reward of a feature vector

    >>> reward(THETA_STAR, FeatureVector(1, 0, 0, 0, 0))
    -64.0
    """
    weights = np.asarray(theta, dtype=np.float64)
    values = np.asarray(f, dtype=np.float64)
    return float(np.sum(weights * values))
