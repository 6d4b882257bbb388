"""Planar and spatial rigid transforms.

Rotations are stored as unit quaternions ``(w, x, y, z)`` with ``w >= 0``.
Small helpers (``hat``, ``so3_exp``, ``so3_log``) work on plain arrays and are
used by the estimators and kinematics code on hot paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to (-pi, pi]; ties at pi map to +pi."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def hat(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def so3_exp(w):
    w = np.asarray(w, dtype=float)
    th = math.sqrt(w @ w)
    W = hat(w)
    if th < 1e-8:
        return np.eye(3) + W + 0.5 * W @ W
    return np.eye(3) + math.sin(th) / th * W + (1.0 - math.cos(th)) / th**2 * W @ W


def so3_log(R):
    """Rotation vector of ``R``; accurate near 0 and near pi."""
    cos_th = max(-1.0, min(1.0, 0.5 * (np.trace(R) - 1.0)))
    th = math.acos(cos_th)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-6:
        return 0.5 * v
    if math.pi - th < 1e-4:
        # axis from the symmetric part; sign fixed by the antisymmetric part
        B = 0.5 * (R + R.T) - cos_th * np.eye(3)
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / math.sqrt(max(B[i, i], 1e-300))
        if axis @ v < 0:
            axis = -axis
        return th * axis / np.linalg.norm(axis)
    return th / (2.0 * math.sin(th)) * v


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R):
    """Shepperd's method, returns a canonical (w >= 0) unit quaternion."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    return _canonical(q)


def _canonical(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    # leave already-unit quaternions untouched so serialisation round-trips bit-exactly
    if abs(n - 1.0) > 1e-14:
        q = q / n
    return -q if q[0] < 0 else q


def quat_multiply(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


@dataclass(frozen=True)
class Pose2:
    """Pose on the ground plane; ``theta`` is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def __matmul__(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    compose = __matmul__

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def as_array(self):
        return np.array([self.x, self.y, self.theta])

    def as_matrix(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def to_pose3(self) -> "Pose3":
        return Pose3.from_xyz_rpy((self.x, self.y, 0.0), (0.0, 0.0, self.theta))

    @classmethod
    def from_pose3(cls, pose: "Pose3") -> "Pose2":
        """Project onto the ground plane (drops z, roll and pitch)."""
        R = pose.rotation
        return cls(pose.translation[0], pose.translation[1], math.atan2(R[1, 0], R[0, 0]))


@dataclass(frozen=True, eq=False)
class Pose3:
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        q = _canonical(np.array(self.quaternion, dtype=float).reshape(4))
        t.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def identity(cls) -> "Pose3":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "Pose3":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_rt(cls, R, t) -> "Pose3":
        return cls(t, matrix_to_quat(np.asarray(R, dtype=float)))

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)) -> "Pose3":
        return cls.from_rt(so3_exp(rotvec), t)

    @classmethod
    def from_xyz_rpy(cls, xyz, rpy) -> "Pose3":
        r, p, y = rpy
        Rz = so3_exp((0.0, 0.0, y))
        Ry = so3_exp((0.0, p, 0.0))
        Rx = so3_exp((r, 0.0, 0.0))
        return cls.from_rt(Rz @ Ry @ Rx, xyz)

    @property
    def rotation(self):
        return quat_to_matrix(self.quaternion)

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return Pose3(
            self.translation + self.rotation @ other.translation,
            quat_multiply(self.quaternion, other.quaternion),
        )

    compose = __matmul__

    def inverse(self) -> "Pose3":
        q_inv = self.quaternion * np.array([1.0, -1.0, -1.0, -1.0])
        return Pose3(-(quat_to_matrix(q_inv) @ self.translation), q_inv)

    def transform_points(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def rotvec(self):
        return so3_log(self.rotation)

    def distance(self, other: "Pose3"):
        """(translation distance in metres, rotation angle in radians)."""
        dt = float(np.linalg.norm(self.translation - other.translation))
        dr = float(np.linalg.norm(so3_log(self.rotation.T @ other.rotation)))
        return dt, dr

    def allclose(self, other: "Pose3", atol=1e-9) -> bool:
        dt, dr = self.distance(other)
        return dt <= atol and dr <= atol

    def to_dict(self):
        return {"translation": self.translation.tolist(), "quaternion": self.quaternion.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Pose3":
        return cls(d["translation"], d.get("quaternion", (1.0, 0.0, 0.0, 0.0)))

    def __repr__(self):
        t = np.array2string(self.translation, precision=4)
        q = np.array2string(self.quaternion, precision=4)
        return f"Pose3(t={t}, q={q})"


def se3_exp(xi) -> Pose3:
    """Pose from a 6-vector (rotation vector, translation) with decoupled update."""
    xi = np.asarray(xi, dtype=float)
    return Pose3.from_rt(so3_exp(xi[:3]), xi[3:])


def kabsch(src, dst, weights=None):
    """Least-squares rigid transform (R, t) with ``dst ~ R @ src + t``.

    Returns ``(R, t, singular_values)`` where the singular values of the
    cross-covariance allow callers to detect rank-deficient geometry.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if weights is None:
        w = np.full(len(src), 1.0 / len(src))
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
    mu_s = w @ src
    mu_d = w @ dst
    H = (src - mu_s).T @ ((dst - mu_d) * w[:, None])
    U, S, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    t = mu_d - R @ mu_s
    return R, t, S
