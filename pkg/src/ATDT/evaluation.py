"""
Simulated evaluation of teaching sequences

Every teaching sequence is shown to every learner model, the examples are
tallied per strategy cluster, and simulated learners answer test questions
that ask them to pick the trajectory the autonomous car would take.
"""

import csv
import io
import logging
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .dynamics import Array, Trajectory
from .environment import (
    CLUSTERS,
    EnvClass,
    EnvironmentSpec,
    Variant,
    classify_environment,
    enumerate_environments,
)
from .learner import (
    Belief,
    DegenerateBeliefError,
    Evidence,
    LearnerSpec,
    posterior_target_prob,
    snap_gaps,
)
from .teaching import Cluster, LessonBook, TeachingSequence, verify_sequence

logger = logging.getLogger(__name__)


class SamplingExhaustedError(ValueError):
    """Raised when rejection sampling runs out of environments to try"""


class EvalMatrix:
    """Posterior on theta* of every learner after every teaching sequence

    Rows are teaching sequences, columns are learner models. Cells where the
    learner's belief became degenerate hold 0 and are flagged.
    """

    def __init__(
        self,
        rows: Sequence[str],
        columns: Sequence[str],
        cells: Array,
        flags: Optional[Array] = None,
    ) -> None:
        self.rows = list(rows)
        self.columns = list(columns)
        self.cells = np.array(cells, dtype=np.float64)
        self.flags = (
            np.zeros(self.cells.shape, dtype=bool)
            if flags is None
            else np.array(flags, dtype=bool)
        )
        self.validate()

    def validate(self) -> None:
        if len(set(self.rows)) != len(self.rows):
            raise ValueError(f"Row labels are not unique: {self.rows}")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError(f"Column labels are not unique: {self.columns}")
        shape = (len(self.rows), len(self.columns))
        if self.cells.shape != shape or self.flags.shape != shape:
            msg = f"Cells do not match the labels: {self.cells.shape} != {shape}"
            raise ValueError(msg)
        if np.any(self.cells < 0) or np.any(self.cells > 1):
            raise ValueError("Cells must be probabilities")

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.rows), len(self.columns)

    def cell(self, row: str, column: str) -> float:
        return float(self.cells[self.rows.index(row), self.columns.index(column)])

    def diagonal(self) -> Dict[str, float]:
        """Cells where the sequence was generated for the learner it is shown to"""
        return {
            label: self.cell(label, label)
            for label in self.columns
            if label in self.rows
        }

    def to_csv(self) -> str:
        """Comma separated grid, flagged cells carry a trailing '*'"""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["sequence"] + self.columns)
        for i, row in enumerate(self.rows):
            values = [
                repr(float(value)) + ("*" if flag else "")
                for value, flag in zip(self.cells[i], self.flags[i])
            ]
            writer.writerow([row] + values)
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalMatrix":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        rows, cells, flags = list(), list(), list()
        for line in reader:
            rows.append(line[0])
            cells.append([float(value.rstrip("*")) for value in line[1:]])
            flags.append([value.endswith("*") for value in line[1:]])
        shape = (len(rows), len(header) - 1)
        cells_array = np.array(cells).reshape(shape)
        return cls(rows, header[1:], cells_array, np.array(flags).reshape(shape))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EvalMatrix):
            raise NotImplementedError
        return (
            self.rows == other.rows
            and self.columns == other.columns
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.flags, other.flags)
        )


def cross_evaluate(
    sequences: Sequence[TeachingSequence],
    specs: Sequence[LearnerSpec],
    book: LessonBook,
) -> EvalMatrix:
    """Show every sequence to every learner, starting from a uniform prior"""
    cells = np.zeros((len(sequences), len(specs)))
    flags = np.zeros((len(sequences), len(specs)), dtype=bool)
    for sequence in sequences:
        verify_sequence(sequence, book)

    for r, sequence in enumerate(sequences):
        for c, spec in enumerate(specs):
            belief = book.fold(spec, sequence.specs)
            try:
                cells[r, c] = posterior_target_prob(belief)
            except DegenerateBeliefError:
                logger.warning(f"{spec} has no belief left after {sequence.generator}")
                flags[r, c] = True

    return EvalMatrix(
        [sequence.generator for sequence in sequences],
        [spec.id for spec in specs],
        cells,
        flags,
    )


# Row and column labels of the 2x4 class grid
TALLY_ROWS = ("first", "second")
TALLY_COLUMNS = tuple(env_class.value for env_class in EnvClass)


def tally_examples_by_class(seq: TeachingSequence) -> Array:
    """Count the examples per strategy cluster in a 2x4 grid

    Columns follow the environment classes, rows the two strategies of each
    class in their canonical order.
    """
    grid = np.zeros((2, 4), dtype=np.int64)
    classes = list(EnvClass)
    for env_class, variant in seq.clusters:
        grid[env_class.strategies.index(variant), classes.index(env_class)] += 1
    return grid


def tally_to_csv(grid: Array) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["strategy"] + list(TALLY_COLUMNS))
    for name, row in zip(TALLY_ROWS, grid):
        writer.writerow([name] + [int(value) for value in row])
    return out.getvalue()


def tally_from_csv(text: str) -> Array:
    rows = list(csv.reader(io.StringIO(text)))[1:]
    return np.array([[int(value) for value in row[1:]] for row in rows], dtype=np.int64)


def helpful_environment_count(
    seq: TeachingSequence, env_class: EnvClass, strategy: Variant
) -> int:
    """Signed number of examples that help with one strategy of a class

    With x examples of the strategy and y of the other strategy of the
    class, this is x when x > 0 and -y otherwise.
    """
    if strategy not in env_class.strategies:
        raise ValueError(f"{strategy.value} is not a strategy of {env_class.value}")
    (other,) = (variant for variant in env_class.strategies if variant is not strategy)
    clusters = seq.clusters
    x = clusters.count((env_class, strategy))
    y = clusters.count((env_class, other))
    return x if x > 0 else -y


class TestEnvironment(NamedTuple):
    __test__ = False

    spec: EnvironmentSpec
    target: Cluster
    # Candidate indices of the four options, in the order they are shown
    options: Tuple[int, ...]
    # Position of the optimal trajectory of theta* among the options
    correct: int

    def trajectories(self, book: LessonBook) -> List[Trajectory]:
        candidates = book.lesson(self.spec).candidates
        return [candidates[index] for index in self.options]


# The six test targets, one per strategy of the informative classes
TEST_TARGETS: Tuple[Cluster, ...] = tuple(
    cluster for cluster in CLUSTERS if cluster[0].informative
)


class TestEnvironmentSet:
    """One multiple choice question per informative strategy cluster"""

    __test__ = False

    def __init__(self, tests: Sequence[TestEnvironment], threshold: float, seed: int):
        self.tests = list(tests)
        self.threshold = threshold
        self.seed = seed
        self.validate()

    def validate(self) -> None:
        if [test.target for test in self.tests] != list(TEST_TARGETS):
            msg = "Expected exactly one test environment per informative strategy"
            raise ValueError(msg)
        for test in self.tests:
            if len(test.options) != 4 or len(set(test.options)) != 4:
                raise ValueError(f"Test {test.spec} needs four distinct options")
            if not 0 <= test.correct < 4:
                raise ValueError(f"Test {test.spec} has no correct option")

    def __len__(self) -> int:
        return len(self.tests)

    def __iter__(self) -> Iterator[TestEnvironment]:
        return iter(self.tests)


def reward_gaps(book: LessonBook, spec: EnvironmentSpec, cache: bool = True) -> Array:
    """Reward each candidate loses against the optimum of theta*"""
    lesson = book.lesson(spec, cache)
    rewards = lesson.candidates.rewards(book.thetas[book.target])
    best = rewards[lesson.index]
    return snap_gaps(best - rewards, np.full(len(rewards), best))


def default_gap_threshold(
    pool: Sequence[EnvironmentSpec], book: LessonBook, factor: float = 0.5
) -> float:
    """A fraction of the median positive reward gap over the pool"""
    gaps = np.concatenate([reward_gaps(book, spec) for spec in pool])
    positive = gaps[gaps > 0]
    if not len(positive):
        raise ValueError("No candidate in the pool is worse than the optimum")
    return float(factor * np.median(positive))


def _distinct(candidates: Sequence[Trajectory], chosen: List[int], index: int) -> bool:
    return all(candidates[index] != candidates[other] for other in chosen)


def _options(
    book: LessonBook, spec: EnvironmentSpec, target: Cluster, threshold: float
) -> Optional[List[int]]:
    """The optimum, one close alternate of its cluster and two of the other"""
    lesson = book.lesson(spec, cache=False)
    candidates = lesson.candidates
    gaps = reward_gaps(book, spec, cache=False)
    order = np.argsort(gaps, kind="stable")

    chosen = [lesson.index]
    same: List[int] = list()
    other: List[int] = list()
    for index in (int(i) for i in order):
        label = candidates.labels[index]
        if not 0 < gaps[index] < threshold or label.fallback:
            continue
        if not _distinct(candidates.trajectories, chosen, index):
            continue
        if label.cluster == target and len(same) < 1:
            same.append(index)
        elif label.cluster != target and len(other) < 2:
            other.append(index)
        else:
            continue
        chosen.append(index)

    if len(same) < 1 or len(other) < 2:
        return None
    return chosen


def generate_test_environments(
    pool: Sequence[EnvironmentSpec],
    book: LessonBook,
    reward_gap_threshold: Optional[float] = None,
    seed: int = 0,
    budget: Optional[int] = None,
    fallback: Sequence[EnvironmentSpec] = (),
) -> TestEnvironmentSet:
    """Rejection sample one test environment per informative strategy

    The pool is searched in a seeded random order first. Strategies that no
    pool environment can test are then looked for in `fallback`, again in a
    seeded random order. `budget` caps the number of environments examined.
    """
    if reward_gap_threshold is None:
        reward_gap_threshold = default_gap_threshold(pool, book)
    rng = np.random.default_rng(seed)
    in_pool = set(pool)
    extra = [spec for spec in fallback if spec not in in_pool]
    order = [pool[int(i)] for i in rng.permutation(len(pool))]
    order += [extra[int(i)] for i in rng.permutation(len(extra))]
    if budget is not None:
        order = order[:budget]

    found: Dict[Cluster, TestEnvironment] = dict()
    for examined, spec in enumerate(order):
        if len(found) == len(TEST_TARGETS):
            break
        env_class = classify_environment(spec)
        if all((env_class, variant) in found for variant in env_class.strategies):
            continue
        if not env_class.informative:
            continue
        label = book.lesson(spec, cache=False).label
        if label.fallback or label.cluster in found:
            continue
        options = _options(book, spec, label.cluster, reward_gap_threshold)
        if options is None:
            logger.debug(f"Rejected {spec} as a test for {label}")
            continue
        if examined >= len(pool):
            logger.info(f"Testing {label} outside of the pool, with {spec}")
        shown = [int(index) for index in rng.permutation(options)]
        found[label.cluster] = TestEnvironment(
            spec, label.cluster, tuple(shown), shown.index(options[0])
        )

    missing = [target for target in TEST_TARGETS if target not in found]
    if missing:
        names = ", ".join(f"{c.value}/{v.value}" for c, v in missing)
        raise SamplingExhaustedError(f"No test environment found for: {names}")

    return TestEnvironmentSet(
        [found[target] for target in TEST_TARGETS], reward_gap_threshold, seed
    )


def draw_test_environments(
    book: LessonBook, pool: Sequence[EnvironmentSpec]
) -> TestEnvironmentSet:
    """The test environments of a run, following its configuration"""
    config = book.config
    threshold = config.reward_gap_threshold
    if threshold is None:
        threshold = default_gap_threshold(pool, book, config.reward_gap_factor)
    fallback = enumerate_environments() if config.test_catalog_fallback else []
    return generate_test_environments(
        pool, book, threshold, config.seed, config.test_budget, fallback
    )


def simulated_learner_answer(
    spec: LearnerSpec, b: Belief, test_env: TestEnvironment, book: LessonBook
) -> int:
    """The option with the most belief behind it, the first one wins ties

    Every candidate theta votes with its belief mass for the option it finds
    most likely to be the demonstration. Among equally likely options a theta
    votes for the one it rewards most.
    """
    if b.degenerate:
        raise DegenerateBeliefError("A learner without belief can not answer")
    candidates = book.candidates(test_env.spec)
    scale = book.config.features.euclid_scale
    options = list(test_env.options)
    likely = np.column_stack(
        [
            Evidence(b.thetas, candidates, option, scale).likelihoods(spec)
            for option in options
        ]
    )
    rewards = candidates.reward_table(b.thetas)[:, options]
    preference = np.where(likely == likely.max(axis=1, keepdims=True), rewards, -np.inf)
    picks = np.argmax(preference, axis=1)
    votes = np.bincount(picks, weights=b.masses, minlength=len(options))
    return int(np.argmax(votes))


class TestResult(NamedTuple):
    __test__ = False

    generator: str
    learner: str
    # Chosen option per test, None when the learner had no belief left
    answers: Tuple[Optional[int], ...]
    correct: Tuple[bool, ...]

    @property
    def accuracy(self) -> float:
        return sum(self.correct) / len(self.correct)


def simulate_test(
    sequence: TeachingSequence,
    spec: LearnerSpec,
    tests: TestEnvironmentSet,
    book: LessonBook,
) -> TestResult:
    """A learner answers every test question after seeing a teaching sequence"""
    belief = book.fold(spec, sequence.specs)
    answers: List[Optional[int]] = list()
    for test in tests:
        try:
            answers.append(simulated_learner_answer(spec, belief, test, book))
        except DegenerateBeliefError:
            logger.warning(f"{spec} can not answer after {sequence.generator}")
            answers.append(None)
    correct = tuple(answer == test.correct for answer, test in zip(answers, tests))
    return TestResult(sequence.generator, spec.id, tuple(answers), correct)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Pearson correlation, None when either variable does not vary

    >>> pearson([1, 2, 3], [2, 4, 7])
    0.9933992677987828
    >>> pearson([1, 1, 1], [2, 4, 7]) is None
    True
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError(f"Unequal number of observations: {len(x)} != {len(y)}")
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


class Correlations(NamedTuple):
    # Number of examples against test accuracy
    examples: Optional[float]
    # Helpful environments against answering that strategy's test correctly
    helpful: Optional[float]


def correlations(
    sequences: Sequence[TeachingSequence],
    results: Sequence[TestResult],
    tests: TestEnvironmentSet,
) -> Correlations:
    by_generator = {sequence.generator: sequence for sequence in sequences}

    lengths, accuracies = list(), list()
    helpful, answered = list(), list()
    for result in results:
        sequence = by_generator[result.generator]
        lengths.append(len(sequence))
        accuracies.append(result.accuracy)
        for test, correct in zip(tests, result.correct):
            env_class, strategy = test.target
            helpful.append(helpful_environment_count(sequence, env_class, strategy))
            answered.append(float(correct))

    return Correlations(pearson(lengths, accuracies), pearson(helpful, answered))


class Evaluation(NamedTuple):
    matrix: EvalMatrix
    tallies: Dict[str, Array]
    helpful: Dict[str, Dict[Cluster, int]]
    tests: TestEnvironmentSet
    results: List[TestResult]
    correlations: Correlations


def evaluate(
    sequences: Sequence[TeachingSequence],
    specs: Sequence[LearnerSpec],
    book: LessonBook,
    pool: Sequence[EnvironmentSpec],
) -> Evaluation:
    """Run every simulated analysis on a set of teaching sequences"""
    matrix = cross_evaluate(sequences, specs, book)
    tallies = {seq.generator: tally_examples_by_class(seq) for seq in sequences}
    helpful = {
        seq.generator: {
            (c, v): helpful_environment_count(seq, c, v) for c, v in TEST_TARGETS
        }
        for seq in sequences
    }

    tests = draw_test_environments(book, pool)
    results = [
        simulate_test(sequence, spec, tests, book)
        for sequence in sequences
        for spec in specs
    ]
    analysis = correlations(sequences, results, tests)
    return Evaluation(matrix, tallies, helpful, tests, results, analysis)
