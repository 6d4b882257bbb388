import numpy as np
import pytest

from fabsim.building.stations import compile_primitives, plan_stations
from fabsim.building.wall import ParametricWall, generate_wall
from fabsim.kinematics import default_model


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def default_wall():
    wall = ParametricWall()
    return wall, generate_wall(wall)


@pytest.fixture(scope="session")
def default_plan(model, default_wall):
    wall, tasks = default_wall
    plan = plan_stations(tasks, model, wall=wall)
    return compile_primitives(plan, tasks, model, wall=wall)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_q(model, rng, shrink=0.9):
    lo, hi = model.joint_limits.T
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + shrink * half * rng.uniform(-1.0, 1.0, model.n_joints)


ACCEPTANCE = {}  # criterion number -> verdict line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
