import numpy as np
import pytest

from adaptsign.data import SyntheticSpec, generate_dataset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """A small corpus for harness tests: 4 train, 2 dev, 2 test sentences."""
    root = tmp_path_factory.mktemp("tiny")
    generate_dataset(SyntheticSpec(train=4, dev=2, test=2, seed=3), root)
    return root


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    """The default desk corpus."""
    root = tmp_path_factory.mktemp("desk")
    generate_dataset(SyntheticSpec(), root)
    return root


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
