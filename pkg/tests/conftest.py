import numpy as np
import pytest

# one line per acceptance criterion, echoed after the test summary so the
# pass/fail verdicts survive pytest's output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from foramslice.matcher import build_corpus_index
from foramslice.phantom import make_phantom_corpus
from foramslice.preprocess import PreprocessParams


@pytest.fixture(scope="session")
def phantom_volumes():
    """The standard 5-volume synthetic corpus used across matcher tests."""
    return make_phantom_corpus(5)


@pytest.fixture(scope="session")
def corpus_index(phantom_volumes):
    return build_corpus_index(phantom_volumes)


@pytest.fixture(scope="session")
def small_volumes():
    return make_phantom_corpus(3, shape=(48, 48, 56), seed=7)


@pytest.fixture(scope="session")
def small_index(small_volumes):
    return build_corpus_index(small_volumes)


@pytest.fixture()
def pre_params():
    return PreprocessParams()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
