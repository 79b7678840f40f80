import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bipolar(rng, *shape):
    return (2 * rng.integers(0, 2, size=shape) - 1).astype(np.int8)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    from corpus import build_corpus

    d = tmp_path_factory.mktemp("corpus")
    build_corpus(d)
    return d


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
