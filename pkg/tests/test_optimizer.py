from typing import List

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ATDT.config import ManeuverConfig
from ATDT.dynamics import ControlInput, Trajectory, rollout
from ATDT.environment import (
    EnvClass,
    Environment,
    EnvironmentSpec,
    Goal,
    Lane,
    Variant,
    instantiate,
)
from ATDT.features import THETA_STAR
from ATDT.optimizer import (
    CandidateSet,
    ManeuverTemplate,
    StrategyLabel,
    candidate_set,
    classify_strategy,
    optimal_trajectory,
    refine_trajectory,
    synthesize_batch,
    synthesize_controls,
    template_grid,
)


def follow(template: ManeuverTemplate, env: Environment) -> Trajectory:
    return rollout(env.robot_start, synthesize_controls(template, env), env.dt, 3.0)


def early(lane: Lane, profile: str = "hold") -> ManeuverTemplate:
    return ManeuverTemplate(lane, 0, profile, "early")


STAY = ManeuverTemplate(Lane.CENTER, None, "hold")


@pytest.fixture(scope="module")
def braking() -> Environment:
    return instantiate(EnvironmentSpec(Goal.DRIVE_FORWARD, 100, Lane.CENTER, 50))


@pytest.fixture(scope="module")
def candidates(braking: Environment) -> CandidateSet:
    return candidate_set(braking)


def test_template_grid() -> None:
    templates = template_grid(ManeuverConfig(), 50)
    assert len(templates) == 275
    assert len(set(templates)) == 275

    center = [t for t in templates if t.target_lane is Lane.CENTER]
    assert len(center) == 25
    assert all(t.lane_change_start is None for t in center)

    starts = {t.timing: t.lane_change_start for t in templates if t.timing != "none"}
    assert starts == {"early": 0, "soon": 7, "mid": 15, "late": 22, "last": 30}


def test_template_str() -> None:
    assert str(early(Lane.LEFT, "mild-brake-3s")) == "Left/early/mild-brake-3s"


def test_candidate_set(braking: Environment, candidates: CandidateSet) -> None:
    assert len(candidates) == 275
    for traj in candidates:
        assert traj.horizon == braking.horizon
        assert traj.is_feasible(3.0)
    # Proximity is left alone, every other feature is min-max scaled
    assert np.all(candidates.features[:, 1:] >= 0)
    assert np.all(candidates.features[:, 1:] <= 1)
    assert candidates.features.shape == (275, 5)


def test_candidate_features_are_read_only(candidates: CandidateSet) -> None:
    with pytest.raises(ValueError):
        candidates.features[0, 0] = 1.0


def test_reward_table(candidates: CandidateSet) -> None:
    thetas = np.array([THETA_STAR, -np.ones(5)])
    table = candidates.reward_table(thetas)
    assert table.shape == (2, 275)
    assert np.allclose(table[0], candidates.features @ THETA_STAR)
    assert np.allclose(candidates.rewards(THETA_STAR), table[0])


def test_best_index(candidates: CandidateSet) -> None:
    best = candidates.best_index(THETA_STAR)
    rewards = candidates.rewards(THETA_STAR)
    assert rewards[best] == rewards.max()


def test_best_index_ties_go_to_the_first(candidates: CandidateSet) -> None:
    assert candidates.best_index(np.zeros(5)) == 0


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.just(0.0) | st.floats(-128, -1e-6), min_size=5, max_size=5),
    st.integers(0, 10),
)
def test_best_index_ignores_positive_scaling(
    candidates: CandidateSet, theta: List[float], exponent: int
) -> None:
    weights = np.array(theta)
    scaled = weights * 2.0**exponent
    assert candidates.best_index(scaled) == candidates.best_index(weights)


def test_candidate_index(candidates: CandidateSet) -> None:
    assert candidates.index(candidates[7]) == 7
    copy = Trajectory(candidates[7].dt, candidates[7].states, candidates[7].controls)
    assert candidates.index(copy) == 7


def test_foreign_trajectory(braking: Environment, candidates: CandidateSet) -> None:
    brake = rollout(braking.robot_start, [ControlInput(0, -3)] * 50, braking.dt, 3.0)
    with pytest.raises(ValueError):
        candidates.index(brake)
    assert candidates.normalized(brake).shape == (5,)
    assert np.array_equal(candidates.normalized(candidates[3]), candidates.features[3])


def test_invalid_candidate_set(braking: Environment) -> None:
    with pytest.raises(ValueError):
        CandidateSet(braking, [], [])
    traj = follow(STAY, braking)
    with pytest.raises(ValueError):
        CandidateSet(braking, [STAY, STAY], [traj])


def test_speed_profile_out_of_bounds(braking: Environment) -> None:
    maneuvers = ManeuverConfig(speed_profiles={"launch": (20.0, 1.0)})
    template = ManeuverTemplate(Lane.CENTER, None, "launch")
    with pytest.raises(ValueError):
        synthesize_controls(template, braking, maneuvers=maneuvers)


def test_lane_change_reaches_the_target_lane(braking: Environment) -> None:
    traj = follow(early(Lane.LEFT), braking)
    assert braking.lane_of(float(traj.x[-1])) is Lane.LEFT
    assert follow(STAY, braking).x[-1] == pytest.approx(0.0)


def test_batch_synthesis_matches_single_steps(braking: Environment) -> None:
    templates = template_grid(ManeuverConfig(), braking.horizon)[::25]
    states, controls = synthesize_batch(templates, braking)
    assert states.shape == (len(templates), 51, 5)
    assert controls.shape == (len(templates), 50, 2)
    for i, template in enumerate(templates):
        traj = follow(template, braking)
        assert np.allclose(traj.states, states[i], rtol=0, atol=1e-9)


def test_speed_profiles_span_the_acceleration_bound() -> None:
    accelerations = [a for a, _ in ManeuverConfig().speed_profiles.values()]
    assert min(accelerations) == -10.0
    assert max(accelerations) == 10.0
    durations = [d for _, d in ManeuverConfig().speed_profiles.values()]
    assert max(durations) == 5.0


def test_merge_can_go_ahead_or_behind() -> None:
    env = instantiate(EnvironmentSpec(Goal.MERGE_RIGHT, 100, Lane.RIGHT, 30))
    labels = candidate_set(env).labels
    variants = {label.variant for label in labels if not label.fallback}
    assert variants == {Variant.MERGE_AHEAD, Variant.MERGE_BEHIND}


STRATEGIES = [
    (
        EnvironmentSpec(Goal.DRIVE_FORWARD, 100, Lane.CENTER, 50),
        STAY,
        Variant.STAY_BEHIND,
    ),
    (
        EnvironmentSpec(Goal.DRIVE_FORWARD, 100, Lane.CENTER, 50),
        early(Lane.LEFT),
        Variant.PASS_LANE,
    ),
    (
        EnvironmentSpec(Goal.DRIVE_FORWARD, -100, Lane.CENTER, 50),
        STAY,
        Variant.SPEED_UP,
    ),
    (
        EnvironmentSpec(Goal.DRIVE_FORWARD, -100, Lane.CENTER, 50),
        early(Lane.RIGHT),
        Variant.AVOID_TAILGATER,
    ),
    (
        EnvironmentSpec(Goal.MERGE_RIGHT, 200, Lane.RIGHT, 50),
        early(Lane.RIGHT),
        Variant.MERGE_BEHIND,
    ),
    (
        EnvironmentSpec(Goal.MERGE_RIGHT, -200, Lane.RIGHT, 50),
        early(Lane.RIGHT),
        Variant.MERGE_AHEAD,
    ),
    (
        EnvironmentSpec(Goal.MERGE_RIGHT, 100, Lane.LEFT, 50),
        STAY,
        Variant.OTHER_MERGE,
    ),
    (
        EnvironmentSpec(Goal.DRIVE_FORWARD, 100, Lane.RIGHT, 50),
        STAY,
        Variant.OTHER_FORWARD,
    ),
]


@pytest.mark.parametrize("spec, template, variant", STRATEGIES)
def test_classify_strategy(
    spec: EnvironmentSpec, template: ManeuverTemplate, variant: Variant
) -> None:
    env = instantiate(spec)
    label = classify_strategy(follow(template, env), env)
    assert label == StrategyLabel(env.env_class, variant)
    assert label.cluster == (env.env_class, variant)


def test_merge_fallback() -> None:
    env = instantiate(EnvironmentSpec(Goal.MERGE_RIGHT, 200, Lane.RIGHT, 50))
    label = classify_strategy(follow(STAY, env), env)
    assert label.fallback
    assert label.env_class is EnvClass.MERGING


def test_classify_needs_the_full_horizon(braking: Environment) -> None:
    short = rollout(braking.robot_start, [ControlInput(0, 0)] * 5, braking.dt, 3.0)
    with pytest.raises(ValueError):
        classify_strategy(short, braking)


def test_label_str() -> None:
    label = StrategyLabel(EnvClass.BRAKING, Variant.PASS_LANE)
    assert str(label) == "Braking/PassLane"


def test_optimal_trajectory(braking: Environment, candidates: CandidateSet) -> None:
    traj = optimal_trajectory(THETA_STAR, braking, candidates)
    assert traj is candidates[candidates.best_index(THETA_STAR)]


def test_refinement_never_lowers_the_reward(candidates: CandidateSet) -> None:
    maneuvers = ManeuverConfig(refine=True, refine_iterations=3)
    index = candidates.best_index(THETA_STAR)
    refined = refine_trajectory(THETA_STAR, candidates, index, maneuvers=maneuvers)
    before = float(np.sum(THETA_STAR * candidates.features[index]))
    after = float(np.sum(THETA_STAR * candidates.normalized(refined)))
    assert after >= before
    assert refined.is_feasible(3.0)
