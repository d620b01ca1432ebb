import math
from typing import List, Tuple

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ATDT.dynamics import ControlInput, DynamicsError, Trajectory, rollout
from ATDT.environment import Environment, EnvironmentSpec, Goal, Lane, instantiate
from ATDT.features import (
    FEATURE_NAMES,
    THETA_STAR,
    FeatureVector,
    as_theta,
    feature_vector,
    normalize_features,
    proximity_kernel,
    reward,
)

weights = st.lists(st.floats(-100, 100), min_size=5, max_size=5)


def straight(env: Environment, steps: int = 50) -> Trajectory:
    return rollout(env.robot_start, [ControlInput(0, 0)] * steps, env.dt, 3.0)


@pytest.fixture
def merge() -> Environment:
    return instantiate(EnvironmentSpec(Goal.MERGE_RIGHT, 200, Lane.RIGHT, 50))


@pytest.fixture
def forward() -> Environment:
    return instantiate(EnvironmentSpec(Goal.DRIVE_FORWARD, 100, Lane.CENTER, 50))


def test_theta_star() -> None:
    assert len(FEATURE_NAMES) == 5
    assert list(THETA_STAR) == [-64.0, -0.1, -1.0, -0.1, -0.5]
    with pytest.raises(ValueError):
        THETA_STAR[0] = 0.0


def test_as_theta() -> None:
    assert np.array_equal(as_theta([1, 2, 3, 4, 5]), [1.0, 2.0, 3.0, 4.0, 5.0])
    with pytest.raises(ValueError):
        as_theta([1, 2, 3])
    with pytest.raises(ValueError):
        as_theta([1, 2, 3, 4, math.nan])


def test_kernel_is_elongated_along_the_heading() -> None:
    other = np.zeros((1, 2))
    heading = np.array([math.pi / 2])
    behind = proximity_kernel(np.array([[0.0, 8.0]]), other, heading, (8, 2))
    beside = proximity_kernel(np.array([[2.0, 0.0]]), other, heading, (8, 2))
    assert behind[0] == pytest.approx(math.exp(-0.5))
    assert beside[0] == pytest.approx(math.exp(-0.5))
    far_beside = proximity_kernel(np.array([[8.0, 0.0]]), other, heading, (8, 2))
    assert far_beside[0] < behind[0]


def test_straight_trajectory_merge_right(merge: Environment) -> None:
    f = feature_vector(straight(merge), merge)
    assert f.accel_sq == 0.0
    assert f.speed_dev_sq == 0.0
    assert f.turning == 0.0
    # Every state is one lane width short of the right lane
    assert f.goal_dist == pytest.approx(51 * 4.0**2)
    assert 0 < f.proximity < 51


def test_straight_trajectory_drive_forward(forward: Environment) -> None:
    f = feature_vector(straight(forward), forward)
    assert f.goal_dist == pytest.approx(1000 - 50 * 5)


def test_braking_costs_acceleration(forward: Environment) -> None:
    brake = rollout(forward.robot_start, [ControlInput(0, -5)] * 50, forward.dt, 3.0)
    f = feature_vector(brake, forward)
    assert f.accel_sq == pytest.approx(50 * 0.5**2)
    assert f.speed_dev_sq > 0
    assert f.goal_dist > feature_vector(straight(forward), forward).goal_dist


def test_discount(merge: Environment) -> None:
    full = feature_vector(straight(merge), merge, gamma=1.0)
    discounted = feature_vector(straight(merge), merge, gamma=0.9)
    assert discounted.goal_dist < full.goal_dist
    assert discounted.goal_dist == pytest.approx(16 * (1 - 0.9**51) / (1 - 0.9))


def test_horizon_mismatch(merge: Environment) -> None:
    with pytest.raises(DynamicsError):
        feature_vector(straight(merge, 10), merge)


def test_normalize_features() -> None:
    raw = [FeatureVector(0.3, 2, 5, 1, 7), FeatureVector(0.7, 6, 5, 3, 7)]
    low, high = normalize_features(raw)
    # Proximity is not normalized, constant columns map to 0
    assert low == FeatureVector(0.3, 0.0, 0.0, 0.0, 0.0)
    assert high == FeatureVector(0.7, 1.0, 0.0, 1.0, 0.0)


def test_normalize_empty() -> None:
    with pytest.raises(ValueError):
        normalize_features([])


@settings(max_examples=100)
@given(weights, weights, st.floats(-10, 10), weights)
def test_reward_is_linear_in_theta(
    a: List[float], b: List[float], scale: float, f: List[float]
) -> None:
    combined = [scale * x + y for x, y in zip(a, b)]
    expected = scale * reward(a, f) + reward(b, f)
    assert reward(combined, f) == pytest.approx(expected, rel=1e-9, abs=1e-6)


def test_reward_of_theta_star() -> None:
    assert reward(THETA_STAR, FeatureVector(0, 1, 1, 1, 1)) == pytest.approx(-1.7)


def test_feature_vector_fields() -> None:
    assert FeatureVector._fields == FEATURE_NAMES


positions = st.lists(
    st.tuples(st.floats(-50, 50), st.floats(-300, 300)), min_size=1, max_size=10
)


@settings(max_examples=100)
@given(positions, positions, st.floats(0, 2 * math.pi))
def test_kernel_is_symmetric(
    a: List[Tuple[float, float]], b: List[Tuple[float, float]], heading: float
) -> None:
    n = min(len(a), len(b))
    robot, other = np.array(a[:n]), np.array(b[:n])
    headings = np.full(n, heading)
    forward = proximity_kernel(robot, other, headings, (8, 2))
    backward = proximity_kernel(other, robot, headings, (8, 2))
    assert np.array_equal(forward, backward)


feature_rows = st.lists(
    st.builds(
        FeatureVector,
        *(st.floats(-1e3, 1e3, allow_subnormal=False) for _ in FEATURE_NAMES),
    ),
    min_size=1,
    max_size=20,
)


@settings(max_examples=100)
@given(feature_rows)
def test_normalization_is_idempotent(raw: List[FeatureVector]) -> None:
    once = normalize_features(raw)
    assert normalize_features(once) == once
