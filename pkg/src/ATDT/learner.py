"""
Models of how a person infers the reward parameters from examples

A learner holds a belief over a finite set of candidate reward parameters.
After observing an optimal trajectory it re-weights every candidate by the
likelihood of that observation, which depends on the distance between the
observed trajectory and the candidate's own optimal trajectory.
"""

import logging
import math
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .dynamics import Array, DynamicsError, Trajectory
from .environment import Environment
from .features import THETA_STAR, as_theta
from .optimizer import CandidateSet, candidate_set, classify_strategy

logger = logging.getLogger(__name__)

# Rewards within this relative distance of the maximum count as optimal
CO_OPTIMAL_RTOL = 1e-9


class DegenerateBeliefError(ValueError):
    """Raised when a belief has no mass left on any candidate"""


class Effect(Enum):
    EXACT = "exact"
    DETERMINISTIC = "det"
    PROBABILISTIC = "prob"


class Metric(Enum):
    REWARD = "reward"
    EUCLIDEAN = "euclid"
    STRATEGY = "strategy"


class LearnerSpec(NamedTuple):
    effect: Effect
    metric: Metric = Metric.REWARD
    # tau for the deterministic effect, lambda for the probabilistic effect
    param: Optional[float] = None

    @property
    def id(self) -> str:
        if self.effect is Effect.EXACT:
            return "exact"
        return f"{self.effect.value}-{self.metric.value}"

    @property
    def needs_param(self) -> bool:
        return self.effect is not Effect.EXACT and self.metric is not Metric.STRATEGY

    def validate(self) -> None:
        if self.effect is Effect.EXACT and self.metric is not Metric.REWARD:
            raise ValueError("The exact learner uses the reward-based metric")
        if self.needs_param:
            if self.param is None:
                raise ValueError(f"Learner {self.id} needs a hyperparameter")
            if not self.param > 0:
                raise ValueError(f"Hyperparameter of {self.id} must be positive")

    def with_param(self, param: Optional[float]) -> "LearnerSpec":
        return self._replace(param=param)

    def __str__(self) -> str:
        if self.needs_param:
            return f"{self.id}({self.param:g})"
        return self.id

    @classmethod
    def from_id(cls, model_id: str, param: Optional[float] = None) -> "LearnerSpec":
        """Create a learner specification from its identifier

        >>> LearnerSpec.from_id("det-euclid", 10.0)
        LearnerSpec(effect=<Effect.DETERMINISTIC: 'det'>, metric=<Metric.EUCLIDEAN: 'euclid'>, param=10.0)
        """
        model_id = MODEL_ALIASES.get(model_id, model_id)
        if model_id == "exact":
            return cls(Effect.EXACT)
        try:
            effect, metric = model_id.split("-")
            spec = cls(Effect(effect), Metric(metric), param)
        except ValueError:
            raise ValueError(f"Unknown learner model: {model_id}") from None
        if spec.metric is Metric.STRATEGY:
            spec = spec.with_param(None)
        return spec


MODEL_ALIASES = {"strategy": "det-strategy"}

# The seven learner models, in the order of the evaluation matrix
MODEL_IDS = (
    "exact",
    "det-reward",
    "det-euclid",
    "det-strategy",
    "prob-reward",
    "prob-euclid",
    "prob-strategy",
)


def make_spec(
    effect: Effect, metric: Metric, param: Optional[float] = None
) -> LearnerSpec:
    """Create a validated learner specification in canonical form

    A deterministic reward-based learner with tau=0 is the exact learner.

    >>> make_spec(Effect.DETERMINISTIC, Metric.REWARD, 0.0).id
    'exact'
    """
    if effect is Effect.DETERMINISTIC and metric is Metric.REWARD and param == 0:
        return LearnerSpec(Effect.EXACT)
    if metric is Metric.STRATEGY:
        param = None
    spec = LearnerSpec(effect, metric, param)
    spec.validate()
    return spec


def _resolve(env: Environment, candidates: Optional[CandidateSet]) -> CandidateSet:
    if candidates is None:
        return candidate_set(env)
    if candidates.env is not env:
        raise ValueError("The candidate set belongs to a different environment")
    return candidates


def snap_gaps(gap: Array, best: Array) -> Array:
    """Clear reward gaps that are within round-off of the maximum"""
    snapped: Array = np.where(gap <= CO_OPTIMAL_RTOL * np.abs(best), 0.0, gap)
    return snapped


def distance_reward(
    theta: Array,
    env: Environment,
    xi_obs: Trajectory,
    candidates: Optional[CandidateSet] = None,
) -> float:
    """Reward lost by the observed trajectory compared to theta's optimum"""
    candidates = _resolve(env, candidates)
    rewards = candidates.rewards(theta)
    best = rewards[candidates.best_index(theta)]
    observed = rewards[candidates.index(xi_obs)]
    return float(snap_gaps(np.array([best - observed]), np.array([best]))[0])


def distance_euclidean(
    xi_a: Trajectory, xi_b: Trajectory, scale: Optional[Sequence[float]] = None
) -> float:
    """Mean distance between the states of two trajectories

    The initial states are shared by construction and do not count.
    """
    if xi_a.states.shape != xi_b.states.shape or xi_a.dt != xi_b.dt:
        msg = f"Trajectories differ in length or timestep: {xi_a.states.shape=}, {xi_b.states.shape=}"
        raise DynamicsError(msg)
    weights = np.ones(5) if scale is None else np.asarray(scale, dtype=np.float64)
    difference = (xi_a.states[1:] - xi_b.states[1:]) * weights
    return float(np.mean(np.linalg.norm(difference, axis=1)))


def distance_strategy(xi_a: Trajectory, xi_b: Trajectory, env: Environment) -> float:
    """0 when both trajectories follow the same strategy, infinite otherwise"""
    same = classify_strategy(xi_a, env).cluster == classify_strategy(xi_b, env).cluster
    return 0.0 if same else math.inf


class Evidence:
    """Everything a learner needs to judge one observation in one environment

    Holds, for every candidate theta, the distance between the observed
    trajectory and the theta's optimal trajectory under each metric.
    """

    def __init__(
        self,
        thetas: Array,
        candidates: CandidateSet,
        observed: int,
        scale: Optional[Sequence[float]] = None,
    ) -> None:
        self.candidates = candidates
        self.observed = observed

        thetas = np.atleast_2d(thetas)
        rewards = candidates.reward_table(thetas)
        self.optimal = np.argmax(rewards, axis=1)
        rows = np.arange(len(thetas))
        best = rewards[rows, self.optimal]
        self.reward_gap = snap_gaps(best - rewards[:, observed], best)

        observed_traj = candidates[observed]
        euclid: Dict[int, float] = dict()
        for index in np.unique(self.optimal):
            optimum = candidates[int(index)]
            euclid[int(index)] = distance_euclidean(optimum, observed_traj, scale)
        self.euclid = np.array([euclid[int(index)] for index in self.optimal])

        label = candidates.labels[observed].cluster
        self.same_strategy = np.array(
            [candidates.labels[int(index)].cluster == label for index in self.optimal]
        )

    def distances(self, metric: Metric) -> Array:
        if metric is Metric.REWARD:
            return self.reward_gap
        if metric is Metric.EUCLIDEAN:
            return self.euclid
        distances: Array = np.where(self.same_strategy, 0.0, math.inf)
        return distances

    def likelihoods(self, spec: LearnerSpec) -> Array:
        """Likelihood of the observation under every candidate theta"""
        if spec.effect is Effect.EXACT:
            return (self.reward_gap == 0).astype(np.float64)
        if spec.metric is Metric.STRATEGY:
            return self.same_strategy.astype(np.float64)
        if spec.param is None:
            raise ValueError(f"Learner {spec.id} needs a hyperparameter")
        distances = self.distances(spec.metric)
        if spec.effect is Effect.DETERMINISTIC:
            return (distances <= spec.param).astype(np.float64)
        likelihoods: Array = np.exp(-spec.param * distances)
        return likelihoods


def likelihood(
    spec: LearnerSpec,
    theta: Array,
    env: Environment,
    xi_obs: Trajectory,
    candidates: Optional[CandidateSet] = None,
    scale: Optional[Sequence[float]] = None,
) -> float:
    """Probability, up to normalization, that theta produced the observation"""
    candidates = _resolve(env, candidates)
    evidence = Evidence(as_theta(theta), candidates, candidates.index(xi_obs), scale)
    return float(evidence.likelihoods(spec)[0])


class Belief:
    """Unnormalized weights over a finite set of candidate reward parameters"""

    def __init__(
        self,
        thetas: Array,
        masses: Array,
        target: int,
        prior: Optional[Array] = None,
    ) -> None:
        self.thetas = np.array(thetas, dtype=np.float64)
        self.masses = np.array(masses, dtype=np.float64)
        if prior is None:
            prior = self.masses
        self.prior = np.array(prior, dtype=np.float64)
        self.target = target

        for array in (self.thetas, self.masses, self.prior):
            array.setflags(write=False)

        self.validate()

    def validate(self) -> None:
        if self.thetas.ndim != 2 or self.thetas.shape[1] != 5:
            msg = f"Candidate thetas must have 5 columns: {self.thetas.shape=}"
            raise ValueError(msg)
        if self.masses.shape != (len(self.thetas),):
            raise ValueError("Every candidate theta needs exactly one mass")
        if self.prior.shape != self.masses.shape:
            raise ValueError("The prior does not match the candidate thetas")
        if not np.all(np.isfinite(self.masses)) or np.any(self.masses < 0):
            raise ValueError("Masses must be finite and non-negative")
        if not 0 <= self.target < len(self.thetas):
            raise ValueError(f"Target index out of range: {self.target=}")

    @classmethod
    def uniform(cls, thetas: Array, target: Optional[int] = None) -> "Belief":
        """Uniform belief, by default targeting the last candidate"""
        thetas = np.atleast_2d(thetas)
        index = len(thetas) - 1 if target is None else target
        return cls(thetas, np.ones(len(thetas)), index)

    @property
    def degenerate(self) -> bool:
        return not np.any(self.masses > 0)

    def posterior(self) -> Array:
        total = self.masses.sum()
        if self.degenerate or not total > 0:
            raise DegenerateBeliefError("The belief has no mass left on any candidate")
        posterior: Array = self.masses / total
        return posterior

    def reweight(self, likelihoods: Array) -> "Belief":
        """A new belief with every mass multiplied by its likelihood"""
        belief = Belief(self.thetas, self.masses * likelihoods, self.target, self.prior)
        if belief.degenerate:
            logger.debug("Belief became degenerate")
        return belief

    def rows(self) -> List[Tuple[List[float], float]]:
        """(theta, mass) rows for inspection"""
        return [
            ([float(value) for value in theta], float(mass))
            for theta, mass in zip(self.thetas, self.masses)
        ]


def update_belief(
    b: Belief,
    env: Environment,
    xi_obs: Trajectory,
    spec: LearnerSpec,
    candidates: Optional[CandidateSet] = None,
    scale: Optional[Sequence[float]] = None,
) -> Belief:
    """Bayesian update of a belief after observing a trajectory"""
    candidates = _resolve(env, candidates)
    evidence = Evidence(b.thetas, candidates, candidates.index(xi_obs), scale)
    return b.reweight(evidence.likelihoods(spec))


def posterior_target_prob(b: Belief) -> float:
    """Posterior probability of the target reward parameters

    >>> b = Belief(np.zeros((4, 5)), np.array([1.0, 0.0, 3.0, 4.0]), target=3)
    >>> posterior_target_prob(b)
    0.5
    """
    return float(b.posterior()[b.target])


def sample_candidate_thetas(
    count: int,
    seed: int,
    bounds: Tuple[Sequence[float], Sequence[float]],
    target: Array = THETA_STAR,
) -> Array:
    """Uniformly sample candidate reward parameters, the target comes last"""
    if count < 1:
        raise ValueError(f"Need at least one candidate theta: {count=}")
    low, high = (np.asarray(bound, dtype=np.float64) for bound in bounds)
    rng = np.random.default_rng(seed)
    samples = rng.uniform(low, high, size=(count, len(low)))
    return np.vstack((samples, np.asarray(target, dtype=np.float64)))
