"""Kinematics of the tracked base + 6R arm.

The whole-body configuration is ``(x, y, theta, q1..q6)``: a planar base pose
and the arm joint vector.  Forward kinematics is computed in batch form
(``joint_frames``) so that planners and solvers can evaluate many
configurations with a handful of numpy calls.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, JointLimitError, Unreachable
from .geometry import Pose2, Pose3, so3_log

LIMIT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic description; DH rows are ``(a, alpha, d, offset)`` (classic convention)."""

    dh: np.ndarray
    joint_limits: np.ndarray
    reach: float = 2.55
    base_to_arm_mount: Pose3 = field(default_factory=Pose3.identity)
    max_base_speed: float = 1.39
    max_yaw_rate: float = 0.8
    arm_rate_hz: float = 250.0
    max_joint_speed: np.ndarray = field(default_factory=lambda: np.full(6, 3.0))
    payload_kg: float = 40.0
    tool: Pose3 = field(default_factory=Pose3.identity)
    model_version: str = "1"
    name: str = "robot"

    def __post_init__(self):
        dh = np.array(self.dh, dtype=float)
        lim = np.array(self.joint_limits, dtype=float)
        if dh.ndim != 2 or dh.shape[1] != 4:
            raise ConfigurationError("dh table must have rows (a, alpha, d, offset)")
        if lim.shape != (dh.shape[0], 2):
            raise ConfigurationError("joint_limits must have one (lower, upper) row per joint")
        if np.any(lim[:, 0] > lim[:, 1]):
            raise ConfigurationError("joint limits require lower <= upper")
        for name, arr in (("dh", dh), ("joint_limits", lim)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        speeds = np.array(self.max_joint_speed, dtype=float).reshape(-1)
        if speeds.size == 1:
            speeds = np.full(dh.shape[0], float(speeds[0]))
        speeds.flags.writeable = False
        object.__setattr__(self, "max_joint_speed", speeds)

    @property
    def n_joints(self) -> int:
        return self.dh.shape[0]

    @property
    def locked(self):
        return self.joint_limits[:, 0] == self.joint_limits[:, 1]

    @property
    def spherical_wrist(self) -> bool:
        a, _, d, _ = self.dh.T
        return self.n_joints == 6 and np.allclose(a[3:], 0.0) and abs(d[4]) < 1e-12

    @property
    def wrist_reach(self) -> float:
        """Maximum shoulder-to-wrist-centre distance for a spherical-wrist arm."""
        a, _, d, _ = self.dh.T
        return a[1] + math.hypot(a[2], d[3])

    def home(self):
        """Zero joint vector clipped into the limits."""
        return np.clip(np.zeros(self.n_joints), self.joint_limits[:, 0], self.joint_limits[:, 1])

    def check_limits(self, q):
        q = np.asarray(q, dtype=float)
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        bad = np.nonzero((q < lo - LIMIT_TOL) | (q > hi + LIMIT_TOL))[0]
        if bad.size:
            j = int(bad[0])
            raise JointLimitError(j + 1, float(q[j]), lo[j], hi[j])

    def to_dict(self):
        return {
            "model_version": self.model_version,
            "name": self.name,
            "dh": self.dh.tolist(),
            "limits": self.joint_limits.tolist(),
            "max_joint_speed": self.max_joint_speed.tolist(),
            "reach_m": self.reach,
            "payload_kg": self.payload_kg,
            "arm_rate_hz": self.arm_rate_hz,
            "tool": self.tool.to_dict(),
            "base": {
                "arm_mount": self.base_to_arm_mount.to_dict(),
                "max_speed_mps": self.max_base_speed,
                "max_yaw_rate": self.max_yaw_rate,
            },
        }

    @classmethod
    def from_dict(cls, doc) -> "RobotModel":
        if str(doc.get("model_version")) != "1":
            raise ConfigurationError(f"unsupported model_version {doc.get('model_version')!r}")
        try:
            base = doc.get("base", {})
            return cls(
                dh=doc["dh"],
                joint_limits=doc["limits"],
                reach=float(doc["reach_m"]),
                base_to_arm_mount=Pose3.from_dict(base["arm_mount"]) if "arm_mount" in base else Pose3(),
                max_base_speed=float(base.get("max_speed_mps", 1.39)),
                max_yaw_rate=float(base.get("max_yaw_rate", 0.8)),
                arm_rate_hz=float(doc.get("arm_rate_hz", 250.0)),
                max_joint_speed=doc.get("max_joint_speed", [3.0] * len(doc["dh"])),
                payload_kg=float(doc.get("payload_kg", 0.0)),
                tool=Pose3.from_dict(doc["tool"]) if "tool" in doc else Pose3(),
                model_version="1",
                name=doc.get("name", "robot"),
            )
        except KeyError as exc:
            raise ConfigurationError(f"robot model document missing field {exc}") from None


def load_robot_model(path=None) -> RobotModel:
    """Load a model JSON document; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("fabsim.data").joinpath("irb4600_approx.json").read_text()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"robot model file not found: {path}")
        text = path.read_text()
    return RobotModel.from_dict(json.loads(text))


_DEFAULT_MODEL = None


def default_model() -> RobotModel:
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        _DEFAULT_MODEL = load_robot_model()
    return _DEFAULT_MODEL


@dataclass(frozen=True, eq=False)
class RobotState:
    base: Pose2 = field(default_factory=Pose2)
    q: np.ndarray = field(default_factory=lambda: np.zeros(6))
    base_velocity: tuple = (0.0, 0.0)
    q_dot: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        qd = np.array(self.q_dot, dtype=float)
        q.flags.writeable = False
        qd.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q_dot", qd)
        object.__setattr__(self, "base_velocity", tuple(float(v) for v in self.base_velocity))

    def as_vector(self):
        """Whole-body configuration ``(x, y, theta, q...)``."""
        return np.concatenate([self.base.as_array(), self.q])

    @classmethod
    def from_vector(cls, x) -> "RobotState":
        return cls(Pose2(x[0], x[1], x[2]), x[3:])


# ---------------------------------------------------------------------------
# batch forward kinematics


def joint_frames(model: RobotModel, base, q):
    """World transforms of the arm mount and every joint frame.

    ``base`` has shape (B, 3) and ``q`` (B, n).  Returns (B, n + 2, 4, 4): index
    0 is the arm mount, index i the DH frame after joint i, and the last entry
    the tool centre point.
    """
    base = np.atleast_2d(np.asarray(base, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    B, n = q.shape
    a, alpha, d, offset = model.dh.T
    th = q + offset
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.cos(alpha), np.sin(alpha)

    A = np.zeros((B, n, 4, 4))
    A[..., 0, 0] = ct
    A[..., 0, 1] = -st * ca
    A[..., 0, 2] = st * sa
    A[..., 0, 3] = a * ct
    A[..., 1, 0] = st
    A[..., 1, 1] = ct * ca
    A[..., 1, 2] = -ct * sa
    A[..., 1, 3] = a * st
    A[..., 2, 1] = sa
    A[..., 2, 2] = ca
    A[..., 2, 3] = d
    A[..., 3, 3] = 1.0

    cb, sb = np.cos(base[:, 2]), np.sin(base[:, 2])
    Tb = np.zeros((B, 4, 4))
    Tb[:, 0, 0] = cb
    Tb[:, 0, 1] = -sb
    Tb[:, 1, 0] = sb
    Tb[:, 1, 1] = cb
    Tb[:, 2, 2] = 1.0
    Tb[:, 3, 3] = 1.0
    Tb[:, 0, 3] = base[:, 0]
    Tb[:, 1, 3] = base[:, 1]

    frames = np.empty((B, n + 2, 4, 4))
    frames[:, 0] = Tb @ model.base_to_arm_mount.as_matrix()
    for i in range(n):
        frames[:, i + 1] = frames[:, i] @ A[:, i]
    frames[:, n + 1] = frames[:, n] @ model.tool.as_matrix()
    return frames


def tcp_batch(model, base, q):
    """Tool-centre-point positions (B, 3) and rotations (B, 3, 3)."""
    F = joint_frames(model, base, q)[:, -1]
    return F[:, :3, 3], F[:, :3, :3]


def jacobian_from_frames(model, frames, base):
    """Geometric Jacobians (B, 6, 3 + n); rows are (linear, angular) in world frame."""
    base = np.atleast_2d(np.asarray(base, dtype=float))
    B = frames.shape[0]
    n = model.n_joints
    p = frames[:, -1, :3, 3]
    J = np.zeros((B, 6, 3 + n))
    J[:, 0, 0] = 1.0
    J[:, 1, 1] = 1.0
    # base yaw rotates everything about the world z axis through the base origin
    r = p[:, :2] - base[:, :2]
    J[:, 0, 2] = -r[:, 1]
    J[:, 1, 2] = r[:, 0]
    J[:, 5, 2] = 1.0
    z = frames[:, :n, :3, 2]
    o = frames[:, :n, :3, 3]
    J[:, :3, 3:] = np.cross(z, p[:, None, :] - o).transpose(0, 2, 1)
    J[:, 3:, 3:] = z.transpose(0, 2, 1)
    if np.any(model.locked):
        J[:, :, 3:][:, :, model.locked] = 0.0
    return J


def link_points(model, base, q, per_link=10):
    """Sample points along the arm's link segments, shape (B, n_links * per_link, 3).

    Segments join consecutive joint-frame origins from the arm mount to the
    tool centre point; zero-length segments still contribute points.
    """
    F = joint_frames(model, base, q)
    origins = F[:, :, :3, 3]
    s = np.linspace(0.0, 1.0, per_link)
    starts = origins[:, :-1]
    ends = origins[:, 1:]
    pts = starts[:, :, None, :] + (ends - starts)[:, :, None, :] * s[None, None, :, None]
    return pts.reshape(pts.shape[0], -1, 3)


# ---------------------------------------------------------------------------
# single-configuration API


def _state_arrays(state: RobotState):
    return state.base.as_array(), np.asarray(state.q, dtype=float)


def forward_kinematics(model: RobotModel, state: RobotState) -> Pose3:
    """End-effector (tool centre point) pose in the world frame."""
    base, q = _state_arrays(state)
    model.check_limits(q)
    return Pose3.from_matrix(joint_frames(model, base, q)[0, -1])


def jacobian(model: RobotModel, state: RobotState):
    """6 x (3 + n) geometric Jacobian of the end effector wrt (x, y, theta, q).

    Rows 0-2 are the linear velocity of the tool centre point and rows 3-5 the
    angular velocity, both in the world frame.  Columns of locked joints
    (lower == upper limit) are zero.
    """
    base, q = _state_arrays(state)
    model.check_limits(q)
    frames = joint_frames(model, base, q)
    return jacobian_from_frames(model, frames, base)[0]


def _planar(base):
    x, y, th = (float(v) for v in (base.as_array() if isinstance(base, Pose2) else base))
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, 0.0, x], [s, c, 0.0, y], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])


def shoulder_and_wrist(model, base, target: Pose3):
    """Wrist-centre target and the matching shoulder position (world frame)."""
    a, _, d, _ = model.dh.T
    T = target.as_matrix() @ np.linalg.inv(model.tool.as_matrix())
    wrist = T[:3, 3] - d[5] * T[:3, 2]
    mount = _planar(base) @ model.base_to_arm_mount.as_matrix()
    w_local = mount[:3, :3].T @ (wrist - mount[:3, 3])
    yaw = math.atan2(w_local[1], w_local[0])
    shoulder_local = np.array([a[0] * math.cos(yaw), a[0] * math.sin(yaw), d[0]])
    return wrist, mount[:3, :3] @ shoulder_local + mount[:3, 3], w_local


def reach_margin(model: RobotModel, base, target: Pose3) -> float:
    """Distance by which the wrist-centre target lies inside the reach envelope.

    The envelope is the sphere of radius ``reach - a1`` about the shoulder,
    i.e. ``reach`` measured horizontally from the first joint axis.
    Negative values mean the target is outside.
    """
    wrist, shoulder, _ = shoulder_and_wrist(model, base, target)
    a1 = model.dh[0, 0]
    return (model.reach - a1) - float(np.linalg.norm(wrist - shoulder))


def ik_seed(model: RobotModel, base, target: Pose3, elbow_up=True, wrist_flip=False, backward=False):
    """Closed-form guess for the shipped spherical-wrist geometry, clipped into the limits.

    Used to start the damped-least-squares iteration close to a solution.  The
    upper arm is vertical at zero (offset -pi/2 on joint 2) and joints 2 and 3
    rotate about the same horizontal axis.
    """
    a, _, d, off = model.dh.T
    _, _, w = shoulder_and_wrist(model, base, target)
    q = np.zeros(6)
    q[0] = math.atan2(w[1], w[0])
    r = math.hypot(w[0], w[1]) - a[0]
    if backward:
        # reach over the top: turn joint 1 around and bend joint 2 past vertical
        q[0] = q[0] - math.copysign(math.pi, q[0])
        r = -math.hypot(w[0], w[1]) - a[0]
    s = w[2] - d[0]
    l2 = a[1]
    l3 = math.hypot(a[2], d[3])
    beta = math.atan2(d[3], a[2])
    D = max(-1.0, min(1.0, (r * r + s * s - l2 * l2 - l3 * l3) / (2 * l2 * l3)))
    rel = math.acos(D) if elbow_up else -math.acos(D)
    # angles measured from the vertical: r = l2 sin(q2) + l3 sin(q2 + rel)
    q[1] = math.atan2(r, s) - math.atan2(l3 * math.sin(rel), l2 + l3 * math.cos(rel))
    q[2] = rel - beta
    q[1] = (q[1] + math.pi) % (2 * math.pi) - math.pi
    base_arr = base.as_array() if isinstance(base, Pose2) else np.asarray(base, dtype=float)
    R03 = joint_frames(model, base_arr, q)[0, 3, :3, :3]
    T = target.as_matrix() @ np.linalg.inv(model.tool.as_matrix())
    R36 = R03.T @ T[:3, :3]
    sign = -1.0 if wrist_flip else 1.0
    q[3] = math.atan2(-sign * R36[1, 2], -sign * R36[0, 2])
    q[4] = sign * math.atan2(math.hypot(R36[0, 2], R36[1, 2]), R36[2, 2])
    q[5] = math.atan2(-sign * R36[2, 1], sign * R36[2, 0])
    q -= np.where(np.arange(6) >= 3, off, 0.0)
    q[1:] = (q[1:] + np.pi) % (2 * np.pi) - np.pi
    return np.clip(q, model.joint_limits[:, 0], model.joint_limits[:, 1])


def pose_error(current, target):
    """(position error vector, rotation error vector) taking ``current`` to ``target``."""
    ep = target[:3, 3] - current[:3, 3]
    er = so3_log(target[:3, :3] @ current[:3, :3].T)
    return ep, er


def inverse_kinematics(
    model: RobotModel,
    base: Pose2,
    target: Pose3,
    seed,
    *,
    damping=1e-3,
    max_iter=200,
    step_clamp=0.2,
    tol=1e-9,
):
    """Damped-least-squares IK for the arm with the base held fixed.

    Iterates ``dq = J^T (J J^T + damping^2 I)^-1 e`` with each step scaled so
    that no joint moves more than ``step_clamp`` rad, clipping into the joint
    limits.  Converged when position and rotation errors are both below
    ``tol``.  Raises :class:`Unreachable` with the final residual otherwise.
    """
    seed = np.asarray(seed, dtype=float)
    model.check_limits(seed)
    base_arr = base.as_array() if isinstance(base, Pose2) else np.asarray(base, dtype=float)
    if model.spherical_wrist:
        wrist, shoulder, _ = shoulder_and_wrist(model, base_arr, target)
        gap = float(np.linalg.norm(wrist - shoulder)) - model.wrist_reach
        if gap > 1e-9:
            raise Unreachable(f"target wrist centre {gap:.4f} m beyond the arm envelope", (gap, float("nan")))
    Tt = target.as_matrix()
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    locked = model.locked
    lam2 = damping * damping
    q = seed.copy()
    ep = er = None
    for _ in range(max_iter + 1):
        F = joint_frames(model, base_arr, q)
        ep, er = pose_error(F[0, -1], Tt)
        if np.linalg.norm(ep) <= tol and np.linalg.norm(er) <= tol:
            return q
        J = jacobian_from_frames(model, F, base_arr)[0, :, 3:]
        e = np.concatenate([ep, er])
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e)
        dq[locked] = 0.0
        big = np.max(np.abs(dq))
        if big > step_clamp:
            dq *= step_clamp / big
        q = np.clip(q + dq, lo, hi)
    res = (float(np.linalg.norm(ep)), float(np.linalg.norm(er)))
    raise Unreachable(f"IK did not converge in {max_iter} iterations", res, q)


def solve_ik(model, base, target, seeds=(), **kwargs):
    """IK from the caller's seeds first, then from closed-form guesses ranked by residual."""
    base_arr = base.as_array() if isinstance(base, Pose2) else np.asarray(base, dtype=float)
    last = None
    for s in seeds:
        try:
            return inverse_kinematics(model, base_arr, target, s, **kwargs)
        except Unreachable as exc:
            last = exc
            if math.isnan(exc.residual[1]):
                raise
    guesses = np.array(
        [
            ik_seed(model, base_arr, target, elbow, flip, back)
            for back in (False, True)
            for elbow in (True, False)
            for flip in (False, True)
        ]
    )
    F = joint_frames(model, np.repeat(base_arr[None], len(guesses), 0), guesses)[:, -1]
    Tt = target.as_matrix()
    resid = [sum(np.linalg.norm(e) for e in pose_error(f, Tt)) for f in F]
    for i in np.argsort(resid, kind="stable"):
        try:
            return inverse_kinematics(model, base_arr, target, guesses[i], **kwargs)
        except Unreachable as exc:
            last = exc
            if math.isnan(exc.residual[1]):
                break
    raise last
