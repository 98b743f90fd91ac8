import numpy as np
import pytest

from tsre.ensemble import sample
from tsre.graph import build_chain, build_ring


@pytest.fixture
def chain_sample():
    def make(n=6, lam=1.0, seed=11, index=0):
        return sample(build_chain(n, 1.0, lam), seed, index)
    return make


@pytest.fixture
def ring_sample():
    def make(n=6, lam=1.0, seed=13, index=0):
        return sample(build_ring(n, 1.0, lam), seed, index)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
