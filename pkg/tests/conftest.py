import sys

import pytest

from react_xrl.env import load_env
from react_xrl.policy import train_preset, train_q

# Policy seed whose early-stopped grid policy is used by the multi-seed evolution checks.
UNDERTRAINED_SEED = 0


@pytest.fixture(scope="session")
def flat():
    return load_env("flatgrid11")


@pytest.fixture(scope="session")
def holey():
    return load_env("holeygrid11")


@pytest.fixture(scope="session")
def reach():
    return load_env("pointreach")


@pytest.fixture(scope="session")
def weak_policy(flat):
    return train_q(flat, train_preset("grid-undertrained", UNDERTRAINED_SEED))


@pytest.fixture(scope="session")
def full_policy(flat):
    return train_q(flat, train_preset("grid-full"))


@pytest.fixture(scope="session")
def reach_policy(reach):
    return train_q(reach, train_preset("reach-converged"))


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
