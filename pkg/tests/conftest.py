import numpy as np
import pytest
from hypothesis import settings

from bisample.distributions import ModelParams

# fixed example generation keeps the suite reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20221128)


@pytest.fixture
def unit_theta():
    return ModelParams(1.0)


@pytest.fixture
def record_criterion():
    def record(number, description, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {description}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
