import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from fabsim.geometry import Pose2, Pose3, kabsch, se3_exp, so3_exp, so3_log, wrap_angle

angles = st.floats(-10.0, 10.0, allow_nan=False)
coords = st.floats(-5.0, 5.0, allow_nan=False)
pose2s = st.builds(Pose2, coords, coords, angles)


def random_pose3(rng):
    return Pose3.from_rotvec(rng.normal(size=3), rng.normal(size=3))


def test_wrap_angle_half_open_interval():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0
    x = np.linspace(-20, 20, 2001)
    w = np.array([wrap_angle(v) for v in x])
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert np.allclose(np.cos(w), np.cos(x)) and np.allclose(np.sin(w), np.sin(x))


@given(pose2s, pose2s, pose2s)
@settings(max_examples=200, deadline=None)
def test_pose2_group_axioms(a, b, c):
    lhs, rhs = (a @ b) @ c, a @ (b @ c)
    assert np.allclose(lhs.as_matrix(), rhs.as_matrix(), atol=1e-12)
    ident = a @ a.inverse()
    assert np.allclose(ident.as_matrix(), np.eye(3), atol=1e-12)
    # composition matches homogeneous matrix products
    assert np.allclose((a @ b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


def test_pose3_group_axioms(rng):
    for _ in range(200):
        a, b, c = random_pose3(rng), random_pose3(rng), random_pose3(rng)
        assert np.allclose(((a @ b) @ c).as_matrix(), (a @ (b @ c)).as_matrix(), atol=1e-12)
        assert np.allclose((a @ a.inverse()).as_matrix(), np.eye(4), atol=1e-12)
        assert np.allclose((a @ b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


def test_pose3_invariants(rng):
    for _ in range(100):
        p = random_pose3(rng)
        assert abs(np.linalg.norm(p.quaternion) - 1.0) <= 1e-9
        R = p.rotation
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


def test_so3_against_scipy(rng):
    for _ in range(100):
        w = rng.normal(size=3)
        w *= rng.uniform(0, math.pi - 1e-3) / np.linalg.norm(w)
        assert np.allclose(so3_exp(w), Rotation.from_rotvec(w).as_matrix(), atol=1e-12)
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-9)
    # near pi and near zero
    for w in ([math.pi - 1e-9, 0, 0], [0, 1e-12, 0], [0, 0, -math.pi + 1e-7]):
        assert np.allclose(so3_exp(so3_log(so3_exp(w))), so3_exp(w), atol=1e-7)


def test_xyz_rpy_matches_scipy():
    p = Pose3.from_xyz_rpy((1, 2, 3), (0.1, -0.2, 0.3))
    R = Rotation.from_euler("ZYX", [0.3, -0.2, 0.1]).as_matrix()
    assert np.allclose(p.rotation, R, atol=1e-12)


def test_pose2_pose3_roundtrip():
    p = Pose2(1.0, -2.0, 2.5)
    assert Pose2.from_pose3(p.to_pose3()).as_array() == pytest.approx(p.as_array(), abs=1e-12)


def test_pose3_dict_roundtrip(rng):
    p = random_pose3(rng)
    assert Pose3.from_dict(p.to_dict()).allclose(p, atol=0.0)


def test_kabsch_recovers_transform(rng):
    src = rng.normal(size=(50, 3))
    T = se3_exp(rng.normal(size=6))
    R, t, sv = kabsch(src, T.transform_points(src))
    assert np.allclose(R, T.rotation, atol=1e-12)
    assert np.allclose(t, T.translation, atol=1e-12)
    assert sv.shape == (3,)
