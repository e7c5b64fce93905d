import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Column-normalized 2x2 example used throughout: joint table [[.3, .3], [.1, .3]].
EXAMPLE_JOINT = np.array([[0.3, 0.3], [0.1, 0.3]])
EXAMPLE_M = np.array([[0.75, 0.5], [0.25, 0.5]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


def random_positive(rng, n, m, low=0.05):
    return rng.uniform(low, 1.0, size=(n, m))


def random_interior(rng, m, low=0.02):
    p = rng.uniform(low, 1.0, size=m)
    return p / p.sum()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
