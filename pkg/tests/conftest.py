import numpy as np
import pytest

from admnash.game import ActionInterval, QuadraticGameSpec, quadratic_game


def qspec(a, b, C=None, intervals=None):
    n = len(a)
    return QuadraticGameSpec(a=a, b=b, C=np.zeros((n, n)) if C is None else C, intervals=intervals)


def qgame(a, b, C=None, intervals=None):
    return quadratic_game(qspec(a, b, C, intervals))


@pytest.fixture
def decoupled():
    """a=(2,2), b=(-2,-2), C=0: equilibrium (1, 1)."""
    return qgame([2, 2], [-2, -2])


@pytest.fixture
def coupled():
    """a=(1,1), b=0, c12=c21=0.5."""
    return qgame([1, 1], [0, 0], [[0, 0.5], [0.5, 0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def box(lo, hi, n):
    return [ActionInterval(lo, hi)] * n


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
