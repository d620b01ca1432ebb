"""
Selection of teaching sequences

A teaching sequence is an ordered list of environments together with the
trajectory the autonomous car takes in each of them. The greedy teacher
picks the environment that most increases the learner's posterior on the
true reward parameters; the other generators add strategy coverage or
serve as random baselines.
"""

import logging
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .dynamics import Array, Trajectory
from .environment import (
    CLUSTERS,
    EnvClass,
    EnvironmentSpec,
    Variant,
    classify_environment,
    enumerate_environments,
    instantiate,
)
from .learner import (
    Belief,
    DegenerateBeliefError,
    Effect,
    Evidence,
    LearnerSpec,
    Metric,
    posterior_target_prob,
    sample_candidate_thetas,
)
from .optimizer import CandidateSet, StrategyLabel, candidate_set

logger = logging.getLogger(__name__)

Cluster = Tuple[EnvClass, Variant]


class UnrealizableClusterError(ValueError):
    """Raised when no environment in the pool demonstrates a strategy cluster"""


class EnvironmentPool:
    """The environments a teacher may choose from, in canonical order"""

    def __init__(self, specs: Sequence[EnvironmentSpec], seed: Optional[int] = None):
        self.specs = list(specs)
        self.seed = seed
        if not self.specs:
            raise ValueError("The environment pool is empty")

    @classmethod
    def full(cls) -> "EnvironmentPool":
        return cls(enumerate_environments())

    @classmethod
    def stratified(
        cls,
        per_class: int,
        seed: int,
        catalog: Optional[Sequence[EnvironmentSpec]] = None,
    ) -> "EnvironmentPool":
        """Sample the same number of environments from every class"""
        catalog = list(enumerate_environments() if catalog is None else catalog)
        rng = np.random.default_rng(seed)
        chosen: List[int] = list()
        for env_class in EnvClass:
            members = [
                i
                for i, spec in enumerate(catalog)
                if classify_environment(spec) is env_class
            ]
            size = min(per_class, len(members))
            if size < per_class:
                msg = f"Only {size} environments available for {env_class.value}"
                logger.warning(msg)
            chosen.extend(int(i) for i in rng.choice(members, size=size, replace=False))
        return cls([catalog[i] for i in sorted(chosen)], seed)

    def __len__(self) -> int:
        return len(self.specs)

    def __getitem__(self, index: int) -> EnvironmentSpec:
        return self.specs[index]

    def __iter__(self) -> Iterator[EnvironmentSpec]:
        return iter(self.specs)

    def __repr__(self) -> str:
        return f"EnvironmentPool({len(self.specs)} environments, seed={self.seed})"


class Lesson:
    """An environment with its candidates and the demonstration of theta*"""

    def __init__(
        self,
        spec: EnvironmentSpec,
        candidates: CandidateSet,
        thetas: Array,
        target: int,
        scale: Optional[Sequence[float]] = None,
    ) -> None:
        self.spec = spec
        self.env = candidates.env
        self.candidates = candidates
        self.index = candidates.best_index(thetas[target])
        self.evidence = Evidence(thetas, candidates, self.index, scale)
        self._likelihoods: Dict[LearnerSpec, Array] = dict()

    @property
    def trajectory(self) -> Trajectory:
        return self.candidates[self.index]

    @property
    def label(self) -> StrategyLabel:
        return self.candidates.labels[self.index]

    def likelihoods(self, spec: LearnerSpec) -> Array:
        if spec not in self._likelihoods:
            self._likelihoods[spec] = self.evidence.likelihoods(spec)
        return self._likelihoods[spec]


class LessonBook:
    """Shared state of a run: candidate thetas and the lessons of each environment"""

    def __init__(
        self,
        config: RunConfig = RunConfig(),
        thetas: Optional[Array] = None,
        target: Optional[int] = None,
    ) -> None:
        self.config = config
        if thetas is None:
            thetas = sample_candidate_thetas(
                config.candidate_theta_count,
                config.seed,
                (config.theta_lower, config.theta_upper),
            )
        self.thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        self.target = len(self.thetas) - 1 if target is None else target
        self._candidates: Dict[EnvironmentSpec, CandidateSet] = dict()
        self._lessons: Dict[EnvironmentSpec, Lesson] = dict()
        self._learners: Dict[str, LearnerSpec] = dict()
        self._choices: Dict[str, "HyperparameterChoice"] = dict()
        self._pool: Optional[EnvironmentPool] = None

    def derive(
        self,
        config: Optional[RunConfig] = None,
        thetas: Optional[Array] = None,
        target: Optional[int] = None,
    ) -> "LessonBook":
        """A book for other run settings that shares the candidate sets

        Candidate sets only depend on the road, the maneuvers and the
        features, so those have to agree.
        """
        config = self.config if config is None else config
        for part in ("simulation", "maneuvers", "features"):
            if getattr(config, part) != getattr(self.config, part):
                raise ValueError(f"Can not share candidate sets, {part} differ")
        if thetas is None:
            thetas = self.thetas
            target = self.target if target is None else target
        book = LessonBook(config, thetas, target)
        book._candidates = self._candidates
        return book

    def candidates(self, spec: EnvironmentSpec, cache: bool = True) -> CandidateSet:
        if spec in self._candidates:
            return self._candidates[spec]
        config = self.config
        env = instantiate(spec, config.simulation)
        candidates = candidate_set(
            env, config.simulation, config.maneuvers, config.features
        )
        if cache:
            self._candidates[spec] = candidates
        return candidates

    def lesson(self, spec: EnvironmentSpec, cache: bool = True) -> Lesson:
        """The lesson of an environment, `cache` keeps a newly computed one"""
        if spec in self._lessons:
            return self._lessons[spec]
        candidates = self.candidates(spec, cache)
        lesson = Lesson(
            spec,
            candidates,
            self.thetas,
            self.target,
            self.config.features.euclid_scale,
        )
        if cache:
            self._lessons[spec] = lesson
        return lesson

    def prior(self) -> Belief:
        return Belief.uniform(self.thetas, self.target)

    def matrix(self, spec: LearnerSpec, pool: Sequence[EnvironmentSpec]) -> Array:
        """Likelihood of each pool environment's demonstration, shape (n, k)"""
        return np.array([self.lesson(env).likelihoods(spec) for env in pool])

    def fold(self, spec: LearnerSpec, specs: Sequence[EnvironmentSpec]) -> Belief:
        """The belief of a learner after observing the demonstrations in order"""
        belief = self.prior()
        for env in specs:
            belief = belief.reweight(self.lesson(env).likelihoods(spec))
        return belief

    def trace(self, spec: LearnerSpec, specs: Sequence[EnvironmentSpec]) -> List[float]:
        """Posterior on the target after every prefix of a sequence"""
        belief = self.prior()
        trace = list()
        for env in specs:
            belief = belief.reweight(self.lesson(env).likelihoods(spec))
            try:
                trace.append(posterior_target_prob(belief))
            except DegenerateBeliefError:
                trace.append(0.0)
        return trace

    def pool(self) -> EnvironmentPool:
        """The default environment pool of this run"""
        if self._pool is None:
            if self.config.pool_mode == "full":
                self._pool = EnvironmentPool.full()
            else:
                self._pool = EnvironmentPool.stratified(
                    self.config.pool_per_class, self.config.seed
                )
            logger.info(f"Using {self._pool}")
        return self._pool

    def learner(self, model_id: str) -> LearnerSpec:
        """The learner specification of a model, calibrating it when needed"""
        spec = LearnerSpec.from_id(model_id)
        if not spec.needs_param:
            return spec
        if spec.id not in self._learners:
            if spec.id in self.config.hyperparameters:
                param = self.config.hyperparameters[spec.id]
            else:
                param = self.calibrate(spec).value
            self._learners[spec.id] = spec.with_param(param)
        return self._learners[spec.id]

    def calibrate(self, spec: LearnerSpec) -> "HyperparameterChoice":
        if spec.id not in self._choices:
            self._choices[spec.id] = select_hyperparameter(
                spec.effect,
                spec.metric,
                self.pool().specs,
                self,
                grid=self.config.hyperparameter_grid,
                min_increase=self.config.min_increase,
                max_n=self.config.max_examples,
            )
        return self._choices[spec.id]

    def flagged(self, model_id: str) -> bool:
        """Whether the hyperparameter of a model was calibrated without qualifying"""
        choice = self._choices.get(LearnerSpec.from_id(model_id).id)
        return choice is not None and choice.flagged


class SequenceEntry(NamedTuple):
    spec: EnvironmentSpec
    trajectory: Trajectory
    label: StrategyLabel


class TeachingSequence:
    """An ordered set of demonstrations shown to a learner"""

    def __init__(
        self,
        entries: Sequence[SequenceEntry],
        generator: str,
        posterior_trace: Sequence[float],
        trace_model: str,
        hyperparameter: Optional[float] = None,
        uncovered: Sequence[Cluster] = (),
        flagged: bool = False,
    ) -> None:
        self.entries = list(entries)
        self.generator = generator
        self.posterior_trace = [float(p) for p in posterior_trace]
        self.trace_model = trace_model
        self.hyperparameter = hyperparameter
        self.uncovered = list(uncovered)
        self.flagged = flagged

        self.validate()

    def validate(self) -> None:
        if len(self.posterior_trace) != len(self.entries):
            msg = f"Posterior trace ({len(self.posterior_trace)}) does not match the number of entries ({len(self.entries)})"
            raise ValueError(msg)
        if len(self.entries) > 10:
            msg = f"A teaching sequence holds at most 10 examples: {len(self)}"
            raise ValueError(msg)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def specs(self) -> List[EnvironmentSpec]:
        return [entry.spec for entry in self.entries]

    @property
    def labels(self) -> List[StrategyLabel]:
        return [entry.label for entry in self.entries]

    @property
    def clusters(self) -> List[Cluster]:
        return [entry.label.cluster for entry in self.entries]

    def __repr__(self) -> str:
        return f"TeachingSequence({self.generator}, {len(self)} entries)"


def _entries(book: LessonBook, specs: Sequence[EnvironmentSpec]) -> List[SequenceEntry]:
    entries = list()
    for spec in specs:
        lesson = book.lesson(spec)
        entries.append(SequenceEntry(spec, lesson.trajectory, lesson.label))
    return entries


def _best_addition(
    masses: Array, matrix: Array, target: int, available: Array
) -> Optional[Tuple[int, float]]:
    """The available environment that maximizes the posterior on the target

    Environments that would leave no mass on any theta are skipped.
    """
    extended = masses[None, :] * matrix
    totals = extended.sum(axis=1)
    degenerate = available & ~(totals > 0)
    for index in np.flatnonzero(degenerate):
        msg = f"Skipping environment {index}: the belief would become degenerate"
        logger.warning(msg)
    valid = available & (totals > 0)
    if not np.any(valid):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        posterior = np.where(valid, extended[:, target] / totals, -np.inf)
    index = int(np.argmax(posterior))
    return index, float(posterior[index])


def _greedy(
    spec: LearnerSpec,
    pool: Sequence[EnvironmentSpec],
    book: LessonBook,
    max_n: int,
    epsilon: float = 0.0,
) -> Tuple[List[int], List[float], Belief]:
    """Greedy selection, stopping when the best gain is not above epsilon"""
    matrix = book.matrix(spec, pool)
    belief = book.prior()
    current = posterior_target_prob(belief)
    available = np.ones(len(pool), dtype=bool)
    chosen: List[int] = list()
    trace: List[float] = list()

    while len(chosen) < max_n:
        best = _best_addition(belief.masses, matrix, belief.target, available)
        if best is None:
            break
        index, posterior = best
        gain = posterior - current
        if not gain > 0 or gain < epsilon:
            break
        belief = belief.reweight(matrix[index])
        current = posterior_target_prob(belief)
        chosen.append(index)
        available[index] = False
        trace.append(current)
        logger.debug(f"Selected {pool[index]} with {current=}")

    return chosen, trace, belief


def greedy_select(
    spec: LearnerSpec,
    pool: Sequence[EnvironmentSpec],
    book: LessonBook,
    max_n: int = 10,
) -> TeachingSequence:
    """Greedily select environments that maximize the posterior on theta*"""
    chosen, trace, _ = _greedy(spec, pool, book, max_n)
    specs = [pool[i] for i in chosen]
    final = trace[-1] if trace else None
    logger.info(f"{spec} selected {len(specs)} examples, final posterior {final}")
    return TeachingSequence(
        _entries(book, specs),
        generator=spec.id,
        posterior_trace=trace,
        trace_model=spec.id,
        hyperparameter=spec.param,
    )


class HyperparameterChoice(NamedTuple):
    value: float
    # Set when no grid value reached the minimum increase
    flagged: bool
    increases: Dict[float, float]
    distinct: Dict[float, int]


def select_hyperparameter(
    effect: Effect,
    metric: Metric,
    pool: Sequence[EnvironmentSpec],
    book: LessonBook,
    grid: Sequence[float] = tuple(10.0**e for e in range(-5, 6)),
    min_increase: float = 0.1,
    max_n: int = 10,
) -> HyperparameterChoice:
    """Choose tau or lambda for an approximate-inference learner

    Among the grid values whose greedy sequence raises the posterior from
    its first example to its last by at least min_increase, pick the one
    that shows the most distinct strategies; smaller values win ties.
    """
    if effect is Effect.EXACT or metric is Metric.STRATEGY:
        msg = f"The {effect.value}-{metric.value} learner has no hyperparameter"
        raise ValueError(msg)

    increases: Dict[float, float] = dict()
    distinct: Dict[float, int] = dict()
    for value in sorted(grid):
        sequence = greedy_select(LearnerSpec(effect, metric, value), pool, book, max_n)
        trace = sequence.posterior_trace
        increases[value] = trace[-1] - trace[0] if trace else 0.0
        distinct[value] = len(set(sequence.clusters))

    qualified = [value for value in sorted(grid) if increases[value] >= min_increase]
    if qualified:
        best = max(qualified, key=lambda value: (distinct[value], -value))
        flagged = False
    else:
        best = max(sorted(grid), key=lambda value: (increases[value], -value))
        flagged = True
        logger.warning(
            f"No {effect.value}-{metric.value} hyperparameter raised the posterior by {min_increase}, using {best:g}"
        )
    logger.info(f"Selected {effect.value}-{metric.value} hyperparameter {best:g}")
    return HyperparameterChoice(best, flagged, increases, distinct)


def coverage_augmented_select(
    spec: LearnerSpec,
    pool: Sequence[EnvironmentSpec],
    book: LessonBook,
    epsilon: float = 0.01,
    max_n: int = 10,
) -> TeachingSequence:
    """Greedy selection followed by one example of every missing strategy

    The greedy phase stops once the best marginal gain drops below epsilon.
    Each uncovered cluster then gets the environment, demonstrating that
    cluster, that maximizes the learner's posterior on theta*.
    """
    chosen, _, belief = _greedy(spec, pool, book, max_n, epsilon)
    matrix = book.matrix(spec, pool)
    labels = [book.lesson(env).label.cluster for env in pool]
    covered = {labels[i] for i in chosen}

    uncovered: List[Cluster] = list()
    for cluster in CLUSTERS:
        if cluster in covered:
            continue
        if len(chosen) >= max_n:
            uncovered.append(cluster)
            continue
        available = np.array(
            [label == cluster and i not in chosen for i, label in enumerate(labels)],
            dtype=bool,
        )
        best = _best_addition(belief.masses, matrix, belief.target, available)
        if best is None:
            name = f"{cluster[0].value}/{cluster[1].value}"
            logger.warning(f"No environment in the pool demonstrates {name}")
            uncovered.append(cluster)
            continue
        index, _ = best
        belief = belief.reweight(matrix[index])
        chosen.append(index)
        covered.add(cluster)

    specs = [pool[i] for i in chosen]
    return TeachingSequence(
        _entries(book, specs),
        generator=f"cov-{spec.id}",
        posterior_trace=book.trace(spec, specs),
        trace_model=spec.id,
        hyperparameter=spec.param,
        uncovered=uncovered,
    )


def random_sequences(seed: int, n: int, pool_size: int, samples: int = 1000) -> Array:
    """Draw random sequences of distinct pool indices, shape (samples, n)"""
    if pool_size < n:
        raise ValueError(f"The pool ({pool_size}) is smaller than the sequence ({n})")
    rng = np.random.default_rng(seed)
    return np.array(
        [rng.choice(pool_size, size=n, replace=False) for _ in range(samples)]
    )


def random_baseline(
    seed: int,
    n: int,
    pool: Sequence[EnvironmentSpec],
    book: LessonBook,
    samples: int = 1000,
) -> TeachingSequence:
    """The median-informative sequence out of many random ones

    Sequences are scored by the posterior of an exact-inference learner.
    """
    draws = random_sequences(seed, n, len(pool), samples)
    exact = LearnerSpec(Effect.EXACT)
    matrix = book.matrix(exact, pool)
    prior = book.prior().masses

    masses = prior[None, :] * np.prod(matrix[draws], axis=1)
    totals = masses.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(totals > 0, masses[:, book.target] / totals, 0.0)

    order = np.argsort(scores, kind="stable")
    median = int(order[samples // 2])
    specs = [pool[int(i)] for i in draws[median]]
    logger.info(f"Median random sequence {median} scores {scores[median]}")
    return TeachingSequence(
        _entries(book, specs),
        generator="random",
        posterior_trace=book.trace(exact, specs),
        trace_model=exact.id,
    )


def cluster_members(
    pool: Sequence[EnvironmentSpec], book: LessonBook
) -> Dict[Cluster, List[int]]:
    """Pool indices whose demonstration falls in each strategy cluster"""
    members: Dict[Cluster, List[int]] = {cluster: list() for cluster in CLUSTERS}
    for i, spec in enumerate(pool):
        members[book.lesson(spec).label.cluster].append(i)
    return members


def coverage_random(
    seed: int, pool: Sequence[EnvironmentSpec], book: LessonBook
) -> TeachingSequence:
    """One random environment from each of the eight strategy clusters"""
    members = cluster_members(pool, book)
    missing = [cluster for cluster in CLUSTERS if not members[cluster]]
    if missing:
        names = ", ".join(f"{c.value}/{v.value}" for c, v in missing)
        msg = f"No environment in the pool demonstrates: {names}"
        raise UnrealizableClusterError(msg)

    rng = np.random.default_rng(seed)
    specs = list()
    for cluster in CLUSTERS:
        choice = int(rng.integers(len(members[cluster])))
        specs.append(pool[members[cluster][choice]])
    exact = LearnerSpec(Effect.EXACT)
    return TeachingSequence(
        _entries(book, specs),
        generator="cov-random",
        posterior_trace=book.trace(exact, specs),
        trace_model=exact.id,
    )


def verify_sequence(sequence: TeachingSequence, book: LessonBook) -> None:
    """Check that every entry shows the optimal trajectory of theta*"""
    for entry in sequence.entries:
        expected = book.lesson(entry.spec).trajectory
        if not np.allclose(entry.trajectory.states, expected.states, rtol=0, atol=1e-9):
            msg = f"Entry {entry.spec} is not the optimal trajectory of theta*"
            raise ValueError(msg)
