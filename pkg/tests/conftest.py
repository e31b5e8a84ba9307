import numpy as np
import pytest

from subdiff.harness import RngStream


@pytest.fixture
def stream(request):
    return RngStream(20240601, request.node.name)


@pytest.fixture
def rng(stream):
    return stream.generator()


def within_se(estimate, se, target, k=3.0):
    return abs(estimate - target) <= k * se


def mc_mean(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / np.sqrt(x.size)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
