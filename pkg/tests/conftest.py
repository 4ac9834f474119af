import numpy as np
import pytest
from hypothesis import settings

from freebe.binomial import binomial_measure
from freebe.measures import atomic_measure, semicircle_measure, standardize

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bernoulli():
    return atomic_measure([(-1.0, 0.5), (1.0, 0.5)])


@pytest.fixture(scope="session")
def skewed():
    return standardize(binomial_measure(0.3))


@pytest.fixture(scope="session")
def semicircle():
    return semicircle_measure()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
