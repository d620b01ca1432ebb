import csv
from pathlib import Path

import pytest

from ATDT.cli import (
    TEACH_IDS,
    build_parser,
    cmd_evaluate,
    cmd_export_trajectories,
    cmd_hyperparam,
    cmd_teach,
    main,
    read_sequences,
    run_config,
    sequence_name,
    teach,
)
from ATDT.learner import MODEL_IDS
from ATDT.models import TeachingSequenceModel, TrajectoryBundleModel
from ATDT.store import Store
from ATDT.teaching import LessonBook


@pytest.fixture
def store(tmp_path: Path) -> Store:
    return Store(str(tmp_path / "out"))


def test_teach_ids() -> None:
    assert TEACH_IDS[:7] == MODEL_IDS
    assert {"strategy", "random", "cov-random", "cov-best"} < set(TEACH_IDS)


def test_sequence_name() -> None:
    assert sequence_name("cov-det-euclid") == "sequence-cov-det-euclid.jsonl"


def test_run_config_precedence(tmp_path: Path) -> None:
    path = tmp_path / "run.conf"
    path.write_text("seed = 1\nout_dir = from-file\npool_mode = full\n")
    parser = build_parser()

    args = parser.parse_args(["teach", "--model", "exact", "--config", str(path)])
    config = run_config(args, environ={"ATDT_SEED": "2"})
    assert config.seed == 2
    assert config.out_dir == "from-file"
    assert config.pool_mode == "full"

    args = parser.parse_args(
        ["hyperparam", "--config", str(path), "--seed", "3", "--pool", "sample"]
    )
    config = run_config(args, environ={"ATDT_SEED": "2", "ATDT_OUT": "env"})
    assert config.seed == 3
    assert config.out_dir == "env"
    assert config.pool_mode == "sample"


def test_unknown_model_is_a_usage_error() -> None:
    with pytest.raises(SystemExit) as e:
        main(["teach", "--model", "oracle"])
    assert e.value.code == 2


def test_teach_rejects_unknown_generators(book: LessonBook) -> None:
    with pytest.raises(ValueError):
        teach("oracle", book, book.pool().specs)


def test_enumerate(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    out = tmp_path / "out"
    main(["enumerate", "--out", str(out)])

    assert len((out / "catalog.jsonl").read_text().splitlines()) == 21216
    with open(out / "census.csv") as fin:
        rows = list(csv.reader(fin))
    assert rows[0] == ["class", "count"]
    assert rows[1] == ["Merging", "3536"]
    assert rows[-1] == ["total", "21216"]
    assert (out / "manifest.json").exists()
    assert "Merging\t3536" in capsys.readouterr().out


def test_missing_config_file(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    with pytest.raises(SystemExit) as e:
        main(["enumerate", "--config", str(tmp_path / "missing.conf")])
    assert e.value.code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: FileNotFoundError: ")


def test_invalid_config_is_reported_on_one_line(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    path = tmp_path / "run.conf"
    path.write_text("max_examples = 11\n")
    with pytest.raises(SystemExit) as e:
        main(["enumerate", "--config", str(path), "--out", str(tmp_path / "out")])
    assert e.value.code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ValidationError: ")
    assert "max_examples" in err
    assert err.count("\n") == 1
    assert not (tmp_path / "out").exists()


def test_teach_and_export(book: LessonBook, store: Store) -> None:
    exact = cmd_teach(book.config, "exact", store, book)
    baseline = cmd_teach(book.config, "random", store, book)
    assert store.exists("sequence-exact.jsonl")
    assert store.exists("belief-exact.jsonl")
    assert store.exists("sequence-random.jsonl")
    assert len(baseline) == book.config.baseline_length

    (record,) = store.read_records("sequence-exact.jsonl", TeachingSequenceModel)
    assert record.to_sequence().specs == exact.specs
    manifest = store.manifest()
    assert manifest is not None
    assert set(manifest.outputs) == {"teach exact", "teach random"}

    sequences = read_sequences([], store)
    assert [sequence.generator for sequence in sequences] == ["exact", "random"]

    count = cmd_export_trajectories(book.config, [], store, book=book)
    assert count == len(set(exact.specs) | set(baseline.specs))
    bundles = store.read_records("trajectories.jsonl", TrajectoryBundleModel)
    assert all(len(bundle.trajectories) == 1 for bundle in bundles)

    path = store.path("sequence-random.jsonl")
    cmd_export_trajectories(book.config, [path], store, all_candidates=True, book=book)
    bundles = store.read_records("trajectories.jsonl", TrajectoryBundleModel)
    assert len(bundles) == len(set(baseline.specs))
    for bundle in bundles:
        lesson = book.lesson(bundle.environment.to_spec())
        assert len(bundle.trajectories) == len(lesson.candidates)
        assert bundle.correct == lesson.index


def test_read_sequences_needs_sequences(store: Store) -> None:
    with pytest.raises(ValueError):
        read_sequences([], store)


def test_hyperparam(book: LessonBook, store: Store) -> None:
    choices = cmd_hyperparam(book.config, store, book)
    assert set(choices) == {"det-reward", "det-euclid", "prob-reward", "prob-euclid"}
    with open(store.path("hyperparameters.csv")) as fin:
        rows = list(csv.reader(fin))
    assert rows[0] == ["model", "value", "flagged", "increase", "distinct"]
    assert [row[0] for row in rows[1:]] == list(choices)
    for row in rows[1:]:
        assert float(row[1]) in book.config.hyperparameter_grid


def test_evaluate(book: LessonBook, store: Store) -> None:
    cmd_teach(book.config, "det-strategy", store, book)
    cmd_teach(book.config, "exact", store, book)
    result = cmd_evaluate(book.config, [], store, book)

    assert result.matrix.rows == ["exact", "det-strategy"]
    assert result.matrix.columns == list(MODEL_IDS)
    for name in (
        "matrix.csv",
        "helpful.csv",
        "tests.jsonl",
        "answers.csv",
        "correlations.csv",
        "tally-exact.csv",
        "tally-det-strategy.csv",
    ):
        assert store.exists(name)
    tests = store.read_records("tests.jsonl", TrajectoryBundleModel)
    assert len(tests) == 6
    assert all(len(test.trajectories) == 4 for test in tests)
