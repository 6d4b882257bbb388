"""Plant models and benchmark problems for the SLQ solver.

The whole-body model is kinematic: the base is commanded by body-frame
velocities ``(v_forward, v_lateral, yaw_rate)`` and the arm by joint
velocities.  The tracks cannot slide sideways, which is imposed as the
control-space equality ``v_lateral = 0`` rather than removed from the model,
so that the solver's feedback gains must respect it explicitly.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..geometry import Pose2
from ..kinematics import jacobian_from_frames, joint_frames
from .problem import (
    ControlConstraint,
    LiftedStateConstraint,
    LinearDynamics,
    OCProblem,
    QuadraticCost,
    RK4Dynamics,
    SLQSettings,
)

LATERAL = 1  # index of the lateral base velocity in the control vector


@njit(cache=True)
def _f_single(x, u, out):
    c = math.cos(x[2])
    s = math.sin(x[2])
    out[0] = u[0] * c - u[1] * s
    out[1] = u[0] * s + u[1] * c
    out[2] = u[2]
    for i in range(3, x.shape[0]):
        out[i] = u[i]


@njit(cache=True)
def _rk4_single(x, u, h):
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    _f_single(x, u, k1)
    _f_single(x + 0.5 * h * k1, u, k2)
    _f_single(x + 0.5 * h * k2, u, k3)
    _f_single(x + h * k3, u, k4)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _closed_loop_kernel(x0, X_bar, U_bar, K, k, alpha, h):
    N, m = U_bar.shape
    n = x0.shape[0]
    X = np.empty((N + 1, n))
    U = np.empty((N, m))
    X[0] = x0
    for t in range(N):
        U[t] = U_bar[t] + K[t] @ (X[t] - X_bar[t]) + alpha * k[t]
        X[t + 1] = _rk4_single(X[t], U[t], h)
    return X, U


class MobileBaseDynamics(RK4Dynamics):
    """State ``(x, y, theta, q_1..q_n_arm)``, control ``(v, v_lat, omega, qdot_1..qdot_n_arm)``."""

    def __init__(self, n_arm=6, dt=0.01):
        self.n_arm = n_arm
        n = 3 + n_arm
        super().__init__(self._f, self._f_jac, n, n, dt)

    @staticmethod
    def _f(X, U):
        c, s = np.cos(X[:, 2]), np.sin(X[:, 2])
        out = np.empty_like(X)
        out[:, 0] = U[:, 0] * c - U[:, 1] * s
        out[:, 1] = U[:, 0] * s + U[:, 1] * c
        out[:, 2] = U[:, 2]
        out[:, 3:] = U[:, 3:]
        return out

    def _f_jac(self, X, U):
        B = X.shape[0]
        c, s = np.cos(X[:, 2]), np.sin(X[:, 2])
        Fx = np.zeros((B, self.n, self.n))
        Fx[:, 0, 2] = -U[:, 0] * s - U[:, 1] * c
        Fx[:, 1, 2] = U[:, 0] * c - U[:, 1] * s
        Fu = np.zeros((B, self.n, self.m))
        Fu[:, 0, 0] = c
        Fu[:, 0, 1] = -s
        Fu[:, 1, 0] = s
        Fu[:, 1, 1] = c
        Fu[:, 2, 2] = 1.0
        idx = np.arange(3, self.n)
        Fu[:, idx, idx] = 1.0
        return Fx, Fu

    def step(self, x, u):
        return _rk4_single(np.asarray(x, dtype=float), np.asarray(u, dtype=float), self.dt)

    def closed_loop_rollout(self, x0, X_bar, U_bar, K, k, alpha):
        return _closed_loop_kernel(
            np.ascontiguousarray(x0, dtype=float),
            np.ascontiguousarray(X_bar),
            np.ascontiguousarray(U_bar),
            np.ascontiguousarray(K),
            np.ascontiguousarray(k),
            float(alpha),
            self.dt,
        )


def nonholonomic_constraint(n):
    """``v_lateral = 0`` as a control-only equality row."""
    S = np.zeros((1, n))
    S[0, LATERAL] = 1.0
    return ControlConstraint(S)


def ee_position_constraint(model, target_position):
    """End-effector position hold ``p_tcp(x) - p* = 0`` lifted onto the successor state."""
    p_star = np.asarray(target_position, dtype=float)

    def g(X):
        F = joint_frames(model, X[:, :3], X[:, 3:])
        return F[:, -1, :3, 3] - p_star

    def g_jac(X):
        F = joint_frames(model, X[:, :3], X[:, 3:])
        return jacobian_from_frames(model, F, X[:, :3])[:, :3, :]

    return LiftedStateConstraint(g, g_jac, 3)


def double_integrator_problem(N=50, dt=0.1, x0=(1.0, 0.0)):
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    cost = QuadraticCost(np.diag([1.0, 0.1]), np.array([[0.01]]), np.diag([10.0, 1.0]))
    return OCProblem(LinearDynamics(A, B, dt), cost, np.asarray(x0, dtype=float), N)


def min_jerk(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def base_reference(start: Pose2, goal: Pose2, drive_time, turn_time, dt, settle_time=1.0):
    """Turn towards the goal, drive straight, turn to the goal heading; min-jerk profiles.

    Goals behind the robot are approached in reverse, so no turn is needed
    for purely longitudinal moves.  Returns an (N + 1, 3) array of base poses
    ending with ``settle_time`` of holding the goal.
    """
    dx, dy = goal.x - start.x, goal.y - start.y
    dist = math.hypot(dx, dy)
    heading = start.theta
    if dist > 1e-9:
        heading = math.atan2(dy, dx)
        if abs(Pose2(0, 0, heading - start.theta).theta) > 0.5 * math.pi:
            heading = Pose2(0, 0, heading + math.pi).theta
    turn0 = Pose2(0, 0, heading - start.theta).theta
    turn1 = Pose2(0, 0, goal.theta - heading).theta
    t0 = turn_time if abs(turn0) > 1e-12 else 0.0
    t1 = drive_time if dist > 1e-12 else 0.0
    t2 = turn_time if abs(turn1) > 1e-12 else 0.0
    N = int(round((t0 + t1 + t2 + settle_time) / dt))
    t = np.arange(N + 1) * dt
    a = min_jerk(t / t0) if t0 else np.ones_like(t)
    b = min_jerk((t - t0) / t1) if t1 else np.ones_like(t)
    c = min_jerk((t - t0 - t1) / t2) if t2 else np.ones_like(t)
    ref = np.empty((N + 1, 3))
    ref[:, 0] = start.x + b * dx
    ref[:, 1] = start.y + b * dy
    ref[:, 2] = start.theta + a * turn0 + c * turn1
    return ref


def whole_body_hold_problem(
    model,
    x0,
    p_star,
    base_ref,
    dt=0.01,
    horizon=None,
    start=0,
    base_weight=200.0,
    yaw_weight=200.0,
    final_scale=10.0,
    control_weights=(1.0, 1.0, 0.5, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05),
    settings=None,
):
    """Move the base along ``base_ref`` while the end effector stays at ``p_star``.

    The horizon starts at reference index ``start``; ``horizon=None`` runs to
    the end of the reference.
    """
    dyn = MobileBaseDynamics(model.n_joints, dt)
    n = dyn.n
    total = base_ref.shape[0] - 1
    N = total - start if horizon is None else horizon
    x_ref = np.zeros((N + 1, n))
    idx = np.minimum(np.arange(start, start + N + 1), total)
    x_ref[:, :3] = base_ref[idx]
    Q = np.zeros((n, n))
    Q[0, 0] = Q[1, 1] = base_weight
    Q[2, 2] = yaw_weight
    R = np.diag(control_weights)
    # joint angles are free in the cost; x_ref carries zeros there
    cost = QuadraticCost(Q, R, Q * final_scale, x_ref=x_ref)
    cons = [nonholonomic_constraint(n), ee_position_constraint(model, p_star)]
    return OCProblem(dyn, cost, np.asarray(x0, dtype=float), N, cons, settings=settings or SLQSettings())


def base_drive_problem(x0, base_ref, dt=0.01, horizon=None, start=0, weights=(200.0, 200.0, 200.0), settings=None):
    """Base-only unicycle tracking with the non-holonomic row projected."""
    dyn = MobileBaseDynamics(0, dt)
    total = base_ref.shape[0] - 1
    N = total - start if horizon is None else horizon
    idx = np.minimum(np.arange(start, start + N + 1), total)
    Q = np.diag(weights)
    cost = QuadraticCost(Q, np.diag([1.0, 1.0, 0.5]), Q * 10.0, x_ref=base_ref[idx])
    return OCProblem(dyn, cost, np.asarray(x0, dtype=float), N, [nonholonomic_constraint(3)], settings=settings or SLQSettings())
