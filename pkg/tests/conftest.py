import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dsrcast import scenario
from dsrcast.model import Flow, Link, Topology

settings.register_profile(
    "ci", deadline=None, max_examples=60, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def two_node(p=1.0, cap=1, rate=1.0, deadline=1):
    return Topology(2, (Link(0, 0, 1, cap, p),), (Flow(0, 0, rate, deadline),))


def line(n, p=1.0, cap=1, rate=1.0, deadline=3):
    links = tuple(Link(i, i, i + 1, cap, p) for i in range(n - 1))
    return Topology(n, links, (Flow(0, 0, rate, deadline),))


@pytest.fixture(scope="session")
def scenario1():
    return scenario.load_scenario(scenario.bundled("scenario1"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def acceptance_line(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
