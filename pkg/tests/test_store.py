import json
import os
from pathlib import Path

import pytest

from ATDT import __version__
from ATDT.config import RunConfig
from ATDT.environment import EnvironmentSpec, Goal, Lane
from ATDT.models import EnvironmentSpecModel
from ATDT.store import MANIFEST, Store, digest, read_records

SPECS = [
    EnvironmentSpec(Goal.MERGE_RIGHT, 100, Lane.RIGHT, 50),
    EnvironmentSpec(Goal.DRIVE_FORWARD, -120, Lane.CENTER, 30, 1.5, 70),
]


@pytest.fixture
def store(tmp_path: Path) -> Store:
    return Store(str(tmp_path / "out"))


def test_store_creates_the_output_folder(store: Store) -> None:
    assert not os.path.exists(store.out_dir)
    store.write_text("census.csv", "class,count\n")
    assert os.path.isdir(store.out_dir)
    assert store.exists("census.csv")
    assert store.read_text("census.csv") == "class,count\n"


def test_write_text_returns_the_digest(store: Store) -> None:
    checksum = store.write_text("a.txt", "hello\n")
    assert checksum == digest(b"hello\n")
    assert store.digest("a.txt") == checksum


def test_records(store: Store) -> None:
    records = [EnvironmentSpecModel.from_spec(spec) for spec in SPECS]
    store.write_records("catalog.jsonl", records)

    lines = store.read_text("catalog.jsonl").splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["goal"] == "MergeRight"

    parsed = store.read_records("catalog.jsonl", EnvironmentSpecModel)
    assert [record.to_spec() for record in parsed] == SPECS
    assert read_records(store.path("catalog.jsonl"), EnvironmentSpecModel) == parsed


def test_no_manifest(store: Store) -> None:
    assert store.manifest() is None


def test_manifest_collects_commands(store: Store) -> None:
    config = RunConfig(seed=2)
    store.write_text("census.csv", "a\n")
    store.record("enumerate", config, ["census.csv"])
    store.write_text("sequence-exact.jsonl", "b\n")
    manifest = store.record("teach exact", config, ["sequence-exact.jsonl"])

    assert manifest.version == __version__
    assert manifest.outputs == {
        "enumerate": {"census.csv": digest(b"a\n")},
        "teach exact": {"sequence-exact.jsonl": digest(b"b\n")},
    }
    assert store.manifest() == manifest
    assert json.loads(store.read_text(MANIFEST))["config"]["seed"] == 2


def test_manifest_replaces_a_command(store: Store) -> None:
    config = RunConfig()
    store.write_text("census.csv", "a\n")
    store.record("enumerate", config, ["census.csv"])
    store.write_text("census.csv", "b\n")
    manifest = store.record("enumerate", config, ["census.csv"])
    assert manifest.outputs == {"enumerate": {"census.csv": digest(b"b\n")}}


def test_manifest_resets_on_a_new_config(
    store: Store, caplog: pytest.LogCaptureFixture
) -> None:
    store.write_text("census.csv", "a\n")
    store.record("enumerate", RunConfig(seed=1), ["census.csv"])
    store.write_text("hyperparameters.csv", "b\n")
    manifest = store.record("hyperparam", RunConfig(seed=2), ["hyperparameters.csv"])

    assert list(manifest.outputs) == ["hyperparam"]
    assert manifest.config.seed == 2
    assert "Configuration changed" in caplog.text
