import numpy as np
import pytest

from fabsim.bench import HOLD_Q0
from fabsim.control.models import base_reference, double_integrator_problem, whole_body_hold_problem
from fabsim.control.mpc import MPCController, mpc_step
from fabsim.control.slq import solve_slq
from fabsim.errors import SolverError
from fabsim.geometry import Pose2
from fabsim.kinematics import default_model, joint_frames
from fabsim.sim.noise import noise_from
from fabsim.sim.scenarios import execute_scenario
from fabsim.sim.world import WorldModel, step

DT = 0.01


@pytest.fixture(scope="module")
def setup():
    m = default_model()
    x0 = np.r_[0.0, 0.0, 0.0, HOLD_Q0]
    p = joint_frames(m, x0[None, :3], HOLD_Q0[None])[0, -1, :3, 3]
    ref = base_reference(Pose2(), Pose2(1.0, 0.0, np.pi / 2), 4.0, 4.0, DT, 1.0)
    return m, x0, p, ref


def test_mpc_matches_one_shot_without_noise(setup):
    m, x0, p, ref = setup
    N = 100
    pr = whole_body_hold_problem(m, x0, p, ref, DT, horizon=N)
    pol, _ = solve_slq(pr)

    def factory(t, x):
        return whole_body_hold_problem(m, x, p, ref, DT, horizon=N - t, start=t)

    ctl = MPCController(factory, iterations=1)
    x = x0.copy()
    X = [x]
    for _ in range(N):
        x = pr.dynamics.step(x, mpc_step(ctl, x))
        X.append(x)
    assert np.max(np.abs(np.array(X) - pol.nominal_states)) <= 1e-6
    assert len(ctl.stats.latencies) == N


SLIP = {"preset": "zero", "slip_bias_v": 0.05, "slip_bias_w": 0.05}


def test_mpc_rejects_slip_bias_open_loop_does_not(setup):
    m, x0, p, ref = setup
    mpc = execute_scenario({"scenario": "ee_hold", "noise": SLIP, "seed": 0}, write=False)
    assert mpc.ok
    assert max(mpc.series["hold_deviation_mm"]) <= 5.0

    pr = whole_body_hold_problem(m, x0, p, ref, DT)
    pol, _ = solve_slq(pr)
    world = WorldModel(m, (0.0, 0.0, 0.0), HOLD_Q0, noise_from(SLIP), 0)
    dev = []
    for u in pol.nominal_controls:
        step(world, np.r_[u[0], u[2], u[3:]], DT)
        q = joint_frames(m, world.base[None], world.q[None])[0, -1, :3, 3]
        dev.append(np.linalg.norm(q - p) * 1e3)
    assert max(dev) > 5.0


def test_median_latency_whole_body_n100():
    mpc = execute_scenario({"scenario": "ee_hold", "noise": "zero", "horizon": 100}, write=False)
    assert mpc.latency["median"] <= 10.0


def test_degraded_mode_falls_back_to_previous_policy():
    base = double_integrator_problem(20)

    def factory(t, x):
        if t >= 2:
            raise SolverError("forced failure")
        pr = double_integrator_problem(20, x0=tuple(x))
        pr.cost = base.cost
        return pr

    ctl = MPCController(factory)
    x = base.x0
    u0 = ctl.step(x)
    x = base.dynamics.step(x, u0)
    ctl.step(x)
    prev = ctl.policy
    x2 = base.dynamics.step(x, np.zeros(1))
    u = ctl.step(x2)
    assert ctl.degraded
    assert ctl.stats.degraded_steps == [2]
    expected = prev.shifted(1, prev.N).control(0, x2)
    assert np.allclose(u, expected, atol=0)


def test_cold_start_failure_propagates():
    def factory(t, x):
        raise SolverError("no model")

    with pytest.raises(SolverError):
        MPCController(factory).step(np.zeros(2))


def test_iterations_validated():
    with pytest.raises(ValueError):
        MPCController(lambda t, x: None, iterations=0)
