from typing import List

import pytest

from ATDT.config import RunConfig
from ATDT.environment import EnvironmentSpec
from ATDT.teaching import LessonBook

SMALL_RUN = RunConfig(
    seed=3,
    candidate_theta_count=30,
    pool_per_class=6,
    hyperparameter_grid=(0.01, 1.0, 100.0),
    baseline_samples=21,
    baseline_length=3,
)


@pytest.fixture(scope="session")
def book() -> LessonBook:
    return LessonBook(SMALL_RUN)


@pytest.fixture(scope="session")
def pool(book: LessonBook) -> List[EnvironmentSpec]:
    return book.pool().specs


@pytest.fixture(scope="session")
def default_book() -> LessonBook:
    """A run at the default configuration"""
    return LessonBook(RunConfig())


@pytest.fixture(scope="session")
def default_pool(default_book: LessonBook) -> List[EnvironmentSpec]:
    return default_book.pool().specs
