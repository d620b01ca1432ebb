"""
Module that contains the command line app, so we can still import __main__
without executing side effects
"""

from .config import RunConfig, load_config
from .environment import CLUSTERS, EnvironmentSpec, census, enumerate_environments
from .evaluation import Evaluation, evaluate, tally_to_csv
from .learner import MODEL_IDS, LearnerSpec
from .models import (
    BeliefRowModel,
    EnvironmentSpecModel,
    StrategyLabelModel,
    TeachingSequenceModel,
    TrajectoryBundleModel,
    TrajectoryModel,
)
from .store import Store, read_records
from .teaching import (
    HyperparameterChoice,
    LessonBook,
    TeachingSequence,
    cluster_members,
    coverage_augmented_select,
    coverage_random,
    greedy_select,
    random_baseline,
)

import argparse
import csv
import glob
import io
import logging
import sys
from typing import Any, Dict, List, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

# Everything cmd_teach can generate a sequence for
TEACH_IDS = MODEL_IDS + ("strategy", "random", "cov-random", "cov-best")


def logger_setup(verbose: bool = False) -> logging.Logger:
    logger = logging.getLogger()
    level = logging.DEBUG if verbose else logging.INFO
    logger.setLevel(level)

    ch = logging.StreamHandler()
    ch.setLevel(level)

    logger.addHandler(ch)

    return logger


def _csv(rows: Sequence[Sequence[Any]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerows(rows)
    return out.getvalue()


def sequence_name(generator: str) -> str:
    return f"sequence-{generator}.jsonl"


def _rank(generator: str) -> int:
    """Canonical row order: the learner models, then the baselines"""
    order = MODEL_IDS + ("random", "cov-random")
    if generator in order:
        return order.index(generator)
    return len(order)


def teach(
    model_id: str, book: LessonBook, pool: Sequence[EnvironmentSpec]
) -> TeachingSequence:
    """Generate the teaching sequence for a model or baseline"""
    config = book.config
    if model_id not in TEACH_IDS:
        expected = ", ".join(TEACH_IDS)
        raise ValueError(f"Unknown model id: {model_id}, expected one of {expected}")

    if model_id == "random":
        return random_baseline(
            config.seed, config.baseline_length, pool, book, config.baseline_samples
        )
    if model_id == "cov-random":
        return coverage_random(config.seed, pool, book)

    if model_id == "cov-best":
        spec = book.learner(config.coverage_model)
        sequence = coverage_augmented_select(
            spec, pool, book, config.epsilon, config.max_examples
        )
    else:
        spec = book.learner(model_id)
        sequence = greedy_select(spec, pool, book, config.max_examples)
    sequence.flagged = book.flagged(spec.id)
    return sequence


def cmd_enumerate(
    config: RunConfig,
    store: Store,
    clusters: bool = False,
    book: Optional[LessonBook] = None,
) -> List[str]:
    """Write the environment catalog and the number of environments per class"""
    specs = enumerate_environments()
    names = ["catalog.jsonl", "census.csv"]
    store.write_records(
        names[0], (EnvironmentSpecModel.from_spec(spec) for spec in specs)
    )

    counts = census(specs)
    rows: List[List[Any]] = [["class", "count"]]
    rows += [[env_class.value, count] for env_class, count in counts.items()]
    rows.append(["total", len(specs)])
    store.write_text(names[1], _csv(rows))
    for env_class, count in counts.items():
        print(f"{env_class.value}\t{count}")

    if clusters:
        book = book or LessonBook(config)
        members = cluster_members(book.pool().specs, book)
        cluster_rows: List[List[Any]] = [["class", "strategy", "count"]]
        cluster_rows += [[c.value, v.value, len(members[(c, v)])] for c, v in CLUSTERS]
        store.write_text("clusters.csv", _csv(cluster_rows))
        names.append("clusters.csv")

    store.record("enumerate", config, names)
    return names


def cmd_teach(
    config: RunConfig, model_id: str, store: Store, book: Optional[LessonBook] = None
) -> TeachingSequence:
    """Generate a teaching sequence and write it with the learner's final belief"""
    book = book or LessonBook(config)
    sequence = teach(model_id, book, book.pool().specs)

    name = sequence_name(sequence.generator)
    store.write_records(name, [TeachingSequenceModel.from_sequence(sequence)])

    learner = book.learner(sequence.trace_model)
    belief = book.fold(learner, sequence.specs)
    belief_name = f"belief-{sequence.generator}.jsonl"
    store.write_records(belief_name, BeliefRowModel.from_belief(belief))

    for entry, posterior in zip(sequence.entries, sequence.posterior_trace):
        print(f"{entry.spec}\t{entry.label}\t{posterior}")
    store.record(f"teach {sequence.generator}", config, [name, belief_name])
    return sequence


def read_sequences(paths: Sequence[str], store: Store) -> List[TeachingSequence]:
    """Read teaching sequences, by default every sequence in the output directory"""
    if not paths:
        paths = sorted(glob.glob(store.path(sequence_name("*"))))
    if not paths:
        raise ValueError(f"No teaching sequences found in {store.out_dir}")
    sequences = [
        record.to_sequence()
        for path in paths
        for record in read_records(path, TeachingSequenceModel)
    ]
    return sorted(sequences, key=lambda seq: (_rank(seq.generator), seq.generator))


def cmd_evaluate(
    config: RunConfig,
    paths: Sequence[str],
    store: Store,
    book: Optional[LessonBook] = None,
) -> Evaluation:
    """Cross evaluate teaching sequences and run the simulated tests"""
    book = book or LessonBook(config)
    sequences = read_sequences(paths, store)
    specs = [book.learner(model_id) for model_id in MODEL_IDS]
    result = evaluate(sequences, specs, book, book.pool().specs)

    names = [
        "matrix.csv",
        "helpful.csv",
        "tests.jsonl",
        "answers.csv",
        "correlations.csv",
    ]
    store.write_text("matrix.csv", result.matrix.to_csv())
    print(result.matrix.to_csv(), end="")

    for generator, grid in result.tallies.items():
        name = f"tally-{generator}.csv"
        store.write_text(name, tally_to_csv(grid))
        names.append(name)

    helpful: List[List[Any]] = [["sequence", "class", "strategy", "count"]]
    for generator, counts in result.helpful.items():
        helpful += [[generator, c.value, v.value, n] for (c, v), n in counts.items()]
    store.write_text("helpful.csv", _csv(helpful))

    bundles = list()
    for test in result.tests:
        labels = book.lesson(test.spec).candidates.labels
        bundles.append(
            TrajectoryBundleModel(
                environment=EnvironmentSpecModel.from_spec(test.spec),
                trajectories=[
                    TrajectoryModel.from_trajectory(t) for t in test.trajectories(book)
                ],
                labels=[StrategyLabelModel.from_label(labels[i]) for i in test.options],
                correct=test.correct,
            )
        )
    store.write_records("tests.jsonl", bundles)

    targets = [f"{c.value}/{v.value}" for c, v in (t.target for t in result.tests)]
    answers: List[List[Any]] = [["sequence", "learner"] + targets + ["accuracy"]]
    for outcome in result.results:
        shown = ["" if answer is None else answer for answer in outcome.answers]
        answers.append(
            [outcome.generator, outcome.learner] + shown + [repr(outcome.accuracy)]
        )
    store.write_text("answers.csv", _csv(answers))

    examples, helpful_correct = (
        "" if r is None else repr(r) for r in result.correlations
    )
    correlations = [
        ["analysis", "r"],
        ["examples-accuracy", examples],
        ["helpful-correct", helpful_correct],
    ]
    store.write_text("correlations.csv", _csv(correlations))

    store.record("evaluate", config, names)
    return result


def cmd_hyperparam(
    config: RunConfig, store: Store, book: Optional[LessonBook] = None
) -> Dict[str, HyperparameterChoice]:
    """Calibrate tau or lambda of every model that has one"""
    book = book or LessonBook(config)
    choices = dict()
    rows: List[List[Any]] = [["model", "value", "flagged", "increase", "distinct"]]
    for model_id in MODEL_IDS:
        spec = LearnerSpec.from_id(model_id)
        if not spec.needs_param:
            continue
        choice = book.calibrate(spec)
        choices[model_id] = choice
        rows.append(
            [
                model_id,
                repr(choice.value),
                choice.flagged,
                repr(choice.increases[choice.value]),
                choice.distinct[choice.value],
            ]
        )
        print(f"{model_id}\t{choice.value:g}\t{'flagged' if choice.flagged else ''}")

    store.write_text("hyperparameters.csv", _csv(rows))
    store.record("hyperparam", config, ["hyperparameters.csv"])
    return choices


def cmd_export_trajectories(
    config: RunConfig,
    paths: Sequence[str],
    store: Store,
    all_candidates: bool = False,
    book: Optional[LessonBook] = None,
) -> int:
    """Write the trajectories of every environment in a set of sequences

    By default only the optimal trajectory of theta* is written, with
    all_candidates every trajectory of the candidate set.
    """
    book = book or LessonBook(config)
    bundles = list()
    seen = set()
    for sequence in read_sequences(paths, store):
        for entry in sequence.entries:
            if entry.spec in seen:
                continue
            seen.add(entry.spec)
            if all_candidates:
                lesson = book.lesson(entry.spec)
                trajectories = list(lesson.candidates)
                labels = lesson.candidates.labels
                correct = lesson.index
            else:
                trajectories, labels, correct = [entry.trajectory], [entry.label], 0
            bundles.append(
                TrajectoryBundleModel(
                    environment=EnvironmentSpecModel.from_spec(entry.spec),
                    trajectories=[
                        TrajectoryModel.from_trajectory(t) for t in trajectories
                    ],
                    labels=[StrategyLabelModel.from_label(label) for label in labels],
                    correct=correct,
                )
            )

    store.write_records("trajectories.jsonl", bundles)
    store.record("export-trajectories", config, ["trajectories.jsonl"])
    return len(bundles)


def run_config(
    args: argparse.Namespace, environ: Optional[Mapping[str, str]] = None
) -> RunConfig:
    """The configuration from the config file, environment and flags"""
    config = load_config(args.config, environ)
    updates: Dict[str, Any] = dict()
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.pool is not None:
        updates["pool_mode"] = args.pool
    if args.out is not None:
        updates["out_dir"] = args.out
    return config.model_copy(update=updates)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Select and evaluate teaching examples for autonomous driving.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Config file with key = value lines")
    common.add_argument("--seed", type=int, help="Seed for every random choice")
    common.add_argument("--pool", choices=["sample", "full"], help="Environment pool")
    common.add_argument("--out", type=str, help="Output directory")
    common.add_argument("--verbose", action="store_true", help="Log debug messages")

    subparsers = parser.add_subparsers(dest="command", required=True)

    enumerate_parser = subparsers.add_parser(
        "enumerate", parents=[common], help="Write the environment catalog"
    )
    enumerate_parser.add_argument(
        "--clusters", action="store_true", help="Count strategy clusters in the pool"
    )

    teach_parser = subparsers.add_parser(
        "teach", parents=[common], help="Generate a teaching sequence"
    )
    teach_parser.add_argument(
        "--model", choices=TEACH_IDS, required=True, help="Model or baseline"
    )

    evaluate_parser = subparsers.add_parser(
        "evaluate", parents=[common], help="Evaluate teaching sequences"
    )
    evaluate_parser.add_argument("sequences", nargs="*", help="Sequence files")

    subparsers.add_parser(
        "hyperparam", parents=[common], help="Calibrate the model hyperparameters"
    )

    export_parser = subparsers.add_parser(
        "export-trajectories", parents=[common], help="Write trajectory records"
    )
    export_parser.add_argument("sequences", nargs="*", help="Sequence files")
    export_parser.add_argument(
        "--all-candidates", action="store_true", help="Write every candidate trajectory"
    )

    return parser


def main(argv: Optional[List[str]] = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)

    logger_setup(args.verbose)

    try:
        config = run_config(args)
        store = Store(config.out_dir)
        logger.debug(f"{config=}")

        if args.command == "enumerate":
            cmd_enumerate(config, store, args.clusters)
        elif args.command == "teach":
            cmd_teach(config, args.model, store)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.sequences, store)
        elif args.command == "hyperparam":
            cmd_hyperparam(config, store)
        elif args.command == "export-trajectories":
            cmd_export_trajectories(config, args.sequences, store, args.all_candidates)
    except Exception as e:
        message = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
