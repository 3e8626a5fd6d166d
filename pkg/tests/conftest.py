import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


class ScriptedRng:
    """Stand-in generator whose first-stage sum is fixed in advance."""

    def __init__(self, first_sum, second_sum=0.0, uniform=0.5):
        self.sums = [first_sum, second_sum]
        self.uniform = uniform

    def normal(self, loc, scale, size):
        s = self.sums.pop(0)
        return np.full(size, s / size)

    def random(self):
        return self.uniform


@pytest.fixture
def scripted():
    return ScriptedRng


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
