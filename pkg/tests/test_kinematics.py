import json
import math

import numpy as np
import pytest

from conftest import random_q
from fabsim.errors import ConfigurationError, JointLimitError, Unreachable
from fabsim.geometry import Pose2, Pose3
from fabsim.kinematics import (
    RobotModel,
    RobotState,
    forward_kinematics,
    inverse_kinematics,
    jacobian,
    joint_frames,
    load_robot_model,
    solve_ik,
)


def _rot(axis, angle):
    c, s = math.cos(angle), math.sin(angle)
    T = np.eye(4)
    i, j = {"x": (1, 2), "z": (0, 1)}[axis]
    T[i, i], T[i, j], T[j, i], T[j, j] = c, -s, s, c
    return T


def _trans(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def chain_oracle(model, base, q):
    """Slow product of elementary transforms, one joint at a time."""
    T = _trans(base[0], base[1], 0.0) @ _rot("z", base[2]) @ model.base_to_arm_mount.as_matrix()
    for (a, alpha, d, off), qi in zip(model.dh, q):
        T = T @ _rot("z", qi + off) @ _trans(0, 0, d) @ _trans(a, 0, 0) @ _rot("x", alpha)
    return T @ model.tool.as_matrix()


def random_state(model, rng):
    return RobotState(Pose2(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi)), random_q(model, rng))


def test_default_model_constants(model):
    assert model.reach == 2.55
    assert model.max_base_speed == 1.39
    assert model.arm_rate_hz == 250.0
    assert model.n_joints == 6
    assert np.all(model.joint_limits[:, 0] < model.joint_limits[:, 1])


def test_home_pose_is_sum_of_link_offsets(model):
    a, _, d, _ = model.dh.T
    mount = model.base_to_arm_mount.translation
    p = forward_kinematics(model, RobotState())
    expected = mount + np.array([a[0] + d[3] + d[5], 0.0, d[0] + a[1] + a[2]])
    assert np.allclose(p.translation, expected, atol=1e-12)


def test_fk_matches_transform_chain(model, rng):
    for _ in range(200):
        s = random_state(model, rng)
        T = forward_kinematics(model, s).as_matrix()
        assert np.allclose(T, chain_oracle(model, s.base.as_array(), s.q), atol=1e-12, rtol=0)


def test_fk_base_translation_and_rotation_equivariance(model, rng):
    for _ in range(50):
        q = random_q(model, rng)
        p0 = forward_kinematics(model, RobotState(Pose2(), q)).translation
        p1 = forward_kinematics(model, RobotState(Pose2(1.0, 0.0, 0.0), q)).translation
        assert np.allclose(p1 - p0, [1.0, 0.0, 0.0], atol=1e-12)
        th = rng.uniform(-math.pi, math.pi)
        pr = forward_kinematics(model, RobotState(Pose2(0.0, 0.0, th), q)).translation
        Rz = _rot("z", th)[:3, :3]
        assert np.allclose(pr, Rz @ p0, atol=1e-12)


def test_fk_joint_limit_names_joint(model):
    q = np.zeros(6)
    q[2] = 2.0
    with pytest.raises(JointLimitError, match="joint 3"):
        forward_kinematics(model, RobotState(Pose2(), q))


def _fd_jacobian(model, x, h=1e-6):
    J = np.zeros((6, 9))
    for i in range(9):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        F = joint_frames(model, np.stack([xp[:3], xm[:3]]), np.stack([xp[3:], xm[3:]]))[:, -1]
        J[:3, i] = (F[0, :3, 3] - F[1, :3, 3]) / (2 * h)
        dR = F[0, :3, :3] @ F[1, :3, :3].T
        w = 0.5 * np.array([dR[2, 1] - dR[1, 2], dR[0, 2] - dR[2, 0], dR[1, 0] - dR[0, 1]])
        J[3:, i] = w / (2 * h)
    return J


def test_jacobian_matches_finite_differences(model, rng):
    worst = 0.0
    for _ in range(1000):
        s = random_state(model, rng)
        J = jacobian(model, s)
        worst = max(worst, np.max(np.abs(J - _fd_jacobian(model, s.as_vector()))))
    assert worst <= 1e-6


def test_jacobian_base_forward_velocity(model, rng):
    s = random_state(model, rng)
    th = s.base.theta
    v = jacobian(model, s) @ np.array([math.cos(th), math.sin(th), 0, 0, 0, 0, 0, 0, 0])
    assert np.allclose(v[:3], [math.cos(th), math.sin(th), 0.0], atol=1e-12)
    assert np.allclose(v[3:], 0.0, atol=1e-12)


def test_locked_joint_column_is_zero(model):
    lim = model.joint_limits.copy()
    lim[3] = (0.3, 0.3)
    locked = RobotModel(model.dh, lim, base_to_arm_mount=model.base_to_arm_mount)
    q = np.array([0.1, 0.2, -0.3, 0.3, 0.5, 0.1])
    J = jacobian(locked, RobotState(Pose2(), q))
    assert np.all(J[:, 3 + 3] == 0.0)
    assert np.any(J[:, 3 + 2] != 0.0)


def test_ik_round_trip_from_own_seed(model, rng):
    for _ in range(20):
        s = RobotState(Pose2(), random_q(model, rng, 0.6))
        target = forward_kinematics(model, s)
        q = inverse_kinematics(model, s.base, target, s.q)
        assert np.linalg.norm(q - s.q) <= 1e-6


def test_ik_beyond_reach_is_unreachable(model):
    mount = model.base_to_arm_mount.translation
    target = Pose3(mount + np.array([3.0, 0.0, 0.0]))
    with pytest.raises(Unreachable) as exc:
        inverse_kinematics(model, Pose2(), target, model.home())
    assert exc.value.residual[0] > 0
    with pytest.raises(Unreachable):
        solve_ik(model, Pose2(), target)


def test_ik_random_reachable_targets(model, rng):
    lo, hi = model.joint_limits.T
    successes = 0
    for _ in range(100):
        q_true = random_q(model, rng, 0.8)
        base = Pose2(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi))
        target = forward_kinematics(model, RobotState(base, q_true))
        q = solve_ik(model, base, target)
        got = forward_kinematics(model, RobotState(base, q))
        dt, dr = got.distance(target)
        assert dt <= 1e-6 and dr <= 1e-6
        assert np.all(q >= lo) and np.all(q <= hi)
        successes += 1
    assert successes == 100


def test_model_json_roundtrip_and_validation(model, tmp_path):
    path = tmp_path / "robot.json"
    path.write_text(json.dumps(model.to_dict()))
    again = load_robot_model(path)
    assert np.array_equal(again.dh, model.dh)
    assert np.array_equal(again.joint_limits, model.joint_limits)
    assert again.base_to_arm_mount.allclose(model.base_to_arm_mount, atol=0.0)
    doc = model.to_dict()
    doc["model_version"] = "2"
    with pytest.raises(ConfigurationError):
        RobotModel.from_dict(doc)
    with pytest.raises(ConfigurationError, match="not found"):
        load_robot_model(tmp_path / "missing.json")
