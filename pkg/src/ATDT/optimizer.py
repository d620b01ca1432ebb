"""
Optimal trajectories over a finite library of maneuvers

Every environment gets the same grid of maneuver templates (target lane,
lane change timing, speed profile). Each template is driven through the
vehicle model by a bounded lane tracking controller, and the resulting
candidate set stands in for the space of all trajectories.
"""

import logging
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import FeatureConfig, ManeuverConfig, SimulationConfig
from .dynamics import (
    HEADING_FORWARD,
    Array,
    Bounds,
    ControlInput,
    Trajectory,
    rollout,
    step_batch,
)
from .environment import LANES, EnvClass, Environment, Goal, Lane, Variant
from .features import feature_vector, normalize_array

logger = logging.getLogger(__name__)


class ManeuverTemplate(NamedTuple):
    target_lane: Lane
    # Step at which the car starts to track the target lane, None to stay
    lane_change_start: Optional[int]
    speed_profile: str
    timing: str = "none"

    def __str__(self) -> str:
        return f"{self.target_lane.value}/{self.timing}/{self.speed_profile}"


class StrategyLabel(NamedTuple):
    env_class: EnvClass
    variant: Variant
    # Set when the strategy was inferred from a fallback rule
    fallback: bool = False

    @property
    def cluster(self) -> Tuple[EnvClass, Variant]:
        return (self.env_class, self.variant)

    def __str__(self) -> str:
        return f"{self.env_class.value}/{self.variant.value}"


def bounds_from(config: SimulationConfig) -> Bounds:
    return Bounds(config.alpha_max, config.u1_max, config.u2_max)


def template_grid(config: ManeuverConfig, horizon: int) -> List[ManeuverTemplate]:
    """All maneuver templates, in canonical order

    Staying in the center lane does not depend on the lane change timing, so
    it appears once per speed profile.

    >>> len(template_grid(ManeuverConfig(), 50))
    275
    """
    templates = list()
    for lane in LANES:
        if lane is Lane.CENTER:
            for profile in config.speed_profiles:
                templates.append(ManeuverTemplate(lane, None, profile))
            continue
        for timing, fraction in config.lane_change_timings.items():
            start = int(fraction * horizon)
            for profile in config.speed_profiles:
                templates.append(ManeuverTemplate(lane, start, profile, timing))
    return templates


def _steering_rates(
    states: Array,
    target_x: Array,
    dt: float,
    L: float,
    bounds: Bounds,
    config: ManeuverConfig,
) -> Array:
    """Steering rates that steer each car towards its lateral position"""
    v = np.maximum(states[:, 3], 1.0)
    heading_offset = states[:, 2] - HEADING_FORWARD
    # Moving towards +x requires a heading below HEADING_FORWARD
    lateral = config.lateral_gain * (target_x - states[:, 0]) / v
    limit = config.max_heading_offset
    desired_offset = -np.clip(lateral, -limit, limit)
    heading_rate = config.heading_gain * (desired_offset - heading_offset)
    alpha_max = bounds.alpha_max
    alpha = np.clip(np.arctan(heading_rate * L / v), -alpha_max, alpha_max)
    rates: Array = np.clip((alpha - states[:, 4]) / dt, -bounds.u1_max, bounds.u1_max)
    return rates


def synthesize_batch(
    templates: Sequence[ManeuverTemplate],
    env: Environment,
    simulation: SimulationConfig = SimulationConfig(),
    maneuvers: ManeuverConfig = ManeuverConfig(),
) -> Tuple[Array, Array]:
    """Drive every template through the vehicle model in lockstep

    Returns the states, shape (n, T+1, 5), and the controls, shape (n, T, 2).
    """
    bounds = bounds_from(simulation)
    L = simulation.axle_length
    n, horizon = len(templates), env.horizon
    accelerations = np.zeros(n)
    durations = np.zeros(n)
    starts = np.full(n, horizon)
    targets = np.full(n, env.robot_start.x)
    for i, template in enumerate(templates):
        acceleration, duration = maneuvers.speed_profiles[template.speed_profile]
        if abs(acceleration) > bounds.u2_max:
            msg = f"Speed profile {template.speed_profile} exceeds the acceleration bound"
            raise ValueError(msg)
        accelerations[i], durations[i] = acceleration, duration
        if template.lane_change_start is not None:
            starts[i] = template.lane_change_start
            targets[i] = env.lane_centers[template.target_lane]

    states = np.empty((n, horizon + 1, 5))
    controls = np.empty((n, horizon, 2))
    states[:, 0] = env.robot_start
    for t in range(horizon):
        target_x = np.where(t >= starts, targets, env.robot_start.x)
        controls[:, t, 0] = _steering_rates(
            states[:, t], target_x, env.dt, L, bounds, maneuvers
        )
        controls[:, t, 1] = np.where(t * env.dt < durations - 1e-9, accelerations, 0)
        states[:, t + 1] = step_batch(states[:, t], controls[:, t], env.dt, L, bounds)
    return states, controls


def synthesize_controls(
    template: ManeuverTemplate,
    env: Environment,
    simulation: SimulationConfig = SimulationConfig(),
    maneuvers: ManeuverConfig = ManeuverConfig(),
) -> List[ControlInput]:
    """Closed loop controls that carry out a maneuver template"""
    _, controls = synthesize_batch([template], env, simulation, maneuvers)
    return [ControlInput(float(u1), float(u2)) for u1, u2 in controls[0]]


def classify_strategy(traj: Trajectory, env: Environment) -> StrategyLabel:
    """Determine which trajectory strategy a trajectory follows"""
    if traj.horizon != env.horizon:
        raise ValueError(f"Trajectory does not span the environment: {traj.horizon=}")

    env_class = env.env_class
    other_y = env.other_car[:, 1]

    if env_class is EnvClass.MERGING:
        for t, x in enumerate(traj.x):
            if env.occupies(Lane.RIGHT, float(x)):
                ahead = traj.y[t] > other_y[t]
                variant = Variant.MERGE_AHEAD if ahead else Variant.MERGE_BEHIND
                return StrategyLabel(env_class, variant)
        # Never reached the right lane, fall back to the final position
        ahead = traj.y[-1] > other_y[-1]
        variant = Variant.MERGE_AHEAD if ahead else Variant.MERGE_BEHIND
        return StrategyLabel(env_class, variant, fallback=True)

    final_lane = env.lane_of(float(traj.x[-1]))
    if env_class is EnvClass.BRAKING:
        if final_lane is Lane.CENTER:
            return StrategyLabel(env_class, Variant.STAY_BEHIND)
        return StrategyLabel(env_class, Variant.PASS_LANE)
    if env_class is EnvClass.TAILGATING:
        if final_lane is Lane.CENTER:
            return StrategyLabel(env_class, Variant.SPEED_UP)
        return StrategyLabel(env_class, Variant.AVOID_TAILGATER)

    if env.spec.goal is Goal.MERGE_RIGHT:
        return StrategyLabel(env_class, Variant.OTHER_MERGE)
    return StrategyLabel(env_class, Variant.OTHER_FORWARD)


class CandidateSet:
    """The finite set of trajectories available in an environment

    Features are normalized over the whole set, so every trajectory and
    every reward parameter uses the same normalization constants.
    """

    def __init__(
        self,
        env: Environment,
        templates: Sequence[ManeuverTemplate],
        trajectories: Sequence[Trajectory],
        features: FeatureConfig = FeatureConfig(),
    ) -> None:
        if not trajectories:
            raise ValueError("A candidate set needs at least one trajectory")
        if len(templates) != len(trajectories):
            raise ValueError("Every trajectory needs its maneuver template")

        self.env = env
        self.templates = list(templates)
        self.trajectories = list(trajectories)
        self.gamma = features.gamma
        self.sigmas = features.sigmas(env.lane_width)

        self.raw = np.array(
            [feature_vector(t, env, self.gamma, self.sigmas) for t in trajectories],
            dtype=np.float64,
        )
        self.bounds = (self.raw.min(axis=0), self.raw.max(axis=0))
        self.features = normalize_array(self.raw, self.bounds)
        self.features.setflags(write=False)
        self.labels = [classify_strategy(t, env) for t in trajectories]

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, index: int) -> Trajectory:
        return self.trajectories[index]

    def reward_table(self, thetas: Array) -> Array:
        """Reward of every candidate under every theta, shape (k, n)"""
        weights = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        table: Array = np.sum(weights[:, None, :] * self.features[None, :, :], axis=2)
        return table

    def rewards(self, theta: Array) -> Array:
        rewards: Array = self.reward_table(theta)[0]
        return rewards

    def best_index(self, theta: Array) -> int:
        """Index of the optimal candidate, the first one wins ties"""
        return int(np.argmax(self.rewards(theta)))

    def index(self, traj: Trajectory) -> int:
        """Position of a trajectory in the candidate set"""
        for i, candidate in enumerate(self.trajectories):
            if candidate is traj:
                return i
        for i, candidate in enumerate(self.trajectories):
            if candidate == traj:
                return i
        raise ValueError(f"{traj} is not part of the candidate set")

    def normalized(self, traj: Trajectory) -> Array:
        """Normalized features of any trajectory, using this set's constants"""
        try:
            return np.array(self.features[self.index(traj)])
        except ValueError:
            raw = np.array([feature_vector(traj, self.env, self.gamma, self.sigmas)])
            features: Array = normalize_array(raw, self.bounds)[0]
            return features


def candidate_set(
    env: Environment,
    simulation: SimulationConfig = SimulationConfig(),
    maneuvers: ManeuverConfig = ManeuverConfig(),
    features: FeatureConfig = FeatureConfig(),
) -> CandidateSet:
    """Generate the candidate trajectories of an environment"""
    templates = template_grid(maneuvers, env.horizon)
    if not templates:
        raise ValueError("The maneuver template grid is empty")

    states, controls = synthesize_batch(templates, env, simulation, maneuvers)
    trajectories = [Trajectory(env.dt, x, u) for x, u in zip(states, controls)]

    logger.debug(f"Generated {len(trajectories)} candidates for {env}")
    return CandidateSet(env, templates, trajectories, features)


def refine_trajectory(
    theta: Array,
    candidates: CandidateSet,
    index: int,
    simulation: SimulationConfig = SimulationConfig(),
    maneuvers: ManeuverConfig = ManeuverConfig(),
) -> Trajectory:
    """Improve a candidate by finite difference ascent on acceleration knots

    The steering commands of the candidate are kept, the accelerations are
    offset by a piecewise constant schedule with one value per knot.
    """
    env = candidates.env
    base = candidates[index]
    bounds = bounds_from(simulation)
    segment = np.minimum(
        np.arange(base.horizon) * maneuvers.refine_knots // base.horizon,
        maneuvers.refine_knots - 1,
    )

    def build(offsets: Array) -> Trajectory:
        u2 = np.clip(
            base.controls[:, 1] + offsets[segment], -bounds.u2_max, bounds.u2_max
        )
        controls = [
            ControlInput(float(u1), float(a))
            for u1, a in zip(base.controls[:, 0], u2)
        ]
        return rollout(
            env.robot_start, controls, env.dt, simulation.axle_length, bounds
        )

    def value(offsets: Array) -> float:
        return float(np.sum(theta * candidates.normalized(build(offsets))))

    offsets = np.zeros(maneuvers.refine_knots)
    best = value(offsets)
    h = 1e-3
    for _ in range(maneuvers.refine_iterations):
        gradient = np.zeros_like(offsets)
        for k in range(len(offsets)):
            shifted = offsets.copy()
            shifted[k] += h
            gradient[k] = (value(shifted) - best) / h
        norm = np.linalg.norm(gradient)
        if norm == 0:
            break
        proposal = offsets + maneuvers.refine_step * gradient / norm
        proposed = value(proposal)
        if proposed <= best:
            break
        offsets, best = proposal, proposed

    return build(offsets) if np.any(offsets) else base


def optimal_trajectory(
    theta: Array,
    env: Environment,
    candidates: Optional[CandidateSet] = None,
    simulation: SimulationConfig = SimulationConfig(),
    maneuvers: ManeuverConfig = ManeuverConfig(),
    features: FeatureConfig = FeatureConfig(),
) -> Trajectory:
    """The trajectory that maximizes the reward under theta"""
    if candidates is None:
        candidates = candidate_set(env, simulation, maneuvers, features)
    index = candidates.best_index(theta)
    if maneuvers.refine:
        return refine_trajectory(theta, candidates, index, simulation, maneuvers)
    return candidates[index]
