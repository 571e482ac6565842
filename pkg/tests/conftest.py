import numpy as np
import pytest

from stayswitch.channels import DiscreteDistribution

from .models import exponential_channels, markov_channels

VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[VERDICTS]

    def record(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        lines.append(line)
        print(line)
        return line

    return record


@pytest.fixture(scope="session")
def exp_channels():
    return exponential_channels()


@pytest.fixture(scope="session")
def exp_channels_coarse():
    return exponential_channels(200)


@pytest.fixture(scope="session")
def mk_channels():
    return markov_channels()


@pytest.fixture
def two_point():
    return DiscreteDistribution([5.0, 15.0], [0.5, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
