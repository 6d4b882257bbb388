"""Discrete-time optimal control problem description.

Everything is evaluated in batch over the horizon: states ``X`` have shape
(N + 1, n), controls ``U`` (N, m).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError


class RK4Dynamics:
    """Explicit RK4 discretisation of ``xdot = f(x, u)`` with exact chain-rule Jacobians.

    ``f(X, U)`` and ``f_jac(X, U) -> (Fx, Fu)`` must accept batches.
    """

    def __init__(self, f, f_jac, n, m, dt):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        self.f = f
        self.f_jac = f_jac
        self.n = n
        self.m = m
        self.dt = float(dt)

    def step_batch(self, X, U):
        h = self.dt
        k1 = self.f(X, U)
        k2 = self.f(X + 0.5 * h * k1, U)
        k3 = self.f(X + 0.5 * h * k2, U)
        k4 = self.f(X + h * k3, U)
        return X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def step(self, x, u):
        return self.step_batch(x[None], u[None])[0]

    def linearize(self, X, U):
        """Jacobians ``A = dx'/dx`` (N, n, n) and ``B = dx'/du`` (N, n, m)."""
        h = self.dt
        N = X.shape[0]
        eye = np.broadcast_to(np.eye(self.n), (N, self.n, self.n))
        k1 = self.f(X, U)
        F1x, F1u = self.f_jac(X, U)
        X2 = X + 0.5 * h * k1
        k2 = self.f(X2, U)
        F2x, F2u = self.f_jac(X2, U)
        X3 = X + 0.5 * h * k2
        k3 = self.f(X3, U)
        F3x, F3u = self.f_jac(X3, U)
        X4 = X + h * k3
        F4x, F4u = self.f_jac(X4, U)

        d1x, d1u = F1x, F1u
        d2x = F2x @ (eye + 0.5 * h * d1x)
        d2u = F2x @ (0.5 * h * d1u) + F2u
        d3x = F3x @ (eye + 0.5 * h * d2x)
        d3u = F3x @ (0.5 * h * d2u) + F3u
        d4x = F4x @ (eye + h * d3x)
        d4u = F4x @ (h * d3u) + F4u
        A = eye + h / 6.0 * (d1x + 2.0 * d2x + 2.0 * d3x + d4x)
        Bm = h / 6.0 * (d1u + 2.0 * d2u + 2.0 * d3u + d4u)
        return A, Bm


class LinearDynamics:
    """``x' = A x + B u``; used for LQ benchmarks."""

    def __init__(self, A, B, dt=1.0):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.n, self.m = self.B.shape
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        self.dt = float(dt)

    def step_batch(self, X, U):
        return X @ self.A.T + U @ self.B.T

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def linearize(self, X, U):
        N = X.shape[0]
        return (
            np.broadcast_to(self.A, (N, self.n, self.n)).copy(),
            np.broadcast_to(self.B, (N, self.n, self.m)).copy(),
        )


def _per_step(ref, count, dim):
    ref = np.asarray(ref, dtype=float)
    if ref.ndim == 1:
        return np.broadcast_to(ref, (count, dim))
    return ref


class QuadraticCost:
    """Tracking cost ``1/2 |x - x_ref|_Q^2 + 1/2 |u - u_ref|_R^2`` plus a terminal term.

    References may be constant vectors or per-step arrays ((N + 1, n) for
    states, (N, m) for controls); weights are constant matrices.
    """

    def __init__(self, Q, R, Qf=None, x_ref=None, u_ref=None):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.Qf = self.Q.copy() if Qf is None else np.atleast_2d(np.asarray(Qf, dtype=float))
        n, m = self.Q.shape[0], self.R.shape[0]
        self.x_ref = np.zeros(n) if x_ref is None else np.asarray(x_ref, dtype=float)
        self.u_ref = np.zeros(m) if u_ref is None else np.asarray(u_ref, dtype=float)

    def sliced(self, start, N):
        """Cost for the sub-horizon beginning at step ``start`` with ``N`` steps."""
        x_ref = self.x_ref if self.x_ref.ndim == 1 else _slice_pad(self.x_ref, start, N + 1)
        u_ref = self.u_ref if self.u_ref.ndim == 1 else _slice_pad(self.u_ref, start, N)
        return QuadraticCost(self.Q, self.R, self.Qf, x_ref, u_ref)

    def total(self, X, U):
        N = U.shape[0]
        dx = X - _per_step(self.x_ref, N + 1, X.shape[1])
        du = U - _per_step(self.u_ref, N, U.shape[1])
        run = 0.5 * (np.einsum("ti,ij,tj->", dx[:-1], self.Q, dx[:-1]) + np.einsum("ti,ij,tj->", du, self.R, du))
        fin = 0.5 * dx[-1] @ self.Qf @ dx[-1]
        return float(run + fin)

    def derivatives(self, X, U):
        N = U.shape[0]
        n, m = X.shape[1], U.shape[1]
        dx = X - _per_step(self.x_ref, N + 1, n)
        du = U - _per_step(self.u_ref, N, m)
        lx = dx[:-1] @ self.Q
        lu = du @ self.R
        lxx = np.broadcast_to(self.Q, (N, n, n)).copy()
        luu = np.broadcast_to(self.R, (N, m, m)).copy()
        lux = np.zeros((N, m, n))
        return lx, lu, lxx, luu, lux, self.Qf @ dx[-1], self.Qf.copy()


def _slice_pad(arr, start, count):
    """Rows ``start:start + count`` repeating the last row past the end."""
    idx = np.minimum(np.arange(start, start + count), arr.shape[0] - 1)
    return arr[idx]


class ControlConstraint:
    """Linear state-input equality ``S u + T x = r`` applied at every step."""

    def __init__(self, S, T=None, r=None):
        self.S = np.atleast_2d(np.asarray(S, dtype=float))
        self.p, m = self.S.shape
        self.T = None if T is None else np.atleast_2d(np.asarray(T, dtype=float))
        self.r = np.zeros(self.p) if r is None else np.asarray(r, dtype=float)

    def evaluate(self, X, U):
        val = U @ self.S.T - self.r
        if self.T is not None:
            val = val + X[:-1] @ self.T.T
        return val

    def linearize(self, X, U):
        N, n = U.shape[0], X.shape[1]
        C = np.broadcast_to(self.S, (N, self.p, self.S.shape[1])).copy()
        D = np.zeros((N, self.p, n)) if self.T is None else np.broadcast_to(self.T, (N, self.p, n)).copy()
        return C, D, self.evaluate(X, U)


class LiftedStateConstraint:
    """State-only equality ``g(x) = 0`` imposed on the successor state.

    The constraint is enforced as ``g(f(x_t, u_t)) = 0`` for t = 0..N-1 so it
    can be projected in control space like any state-input constraint.
    ``g(X)`` returns (B, p) and ``g_jac(X)`` (B, p, n).
    """

    def __init__(self, g, g_jac, p):
        self.g = g
        self.g_jac = g_jac
        self.p = p

    def evaluate(self, X, U):
        return self.g(X[1:])

    def linearize(self, X, U, A=None, B=None):
        G = self.g_jac(X[1:])
        return G @ B, G @ A, self.g(X[1:])


class StateConstraint:
    """State-only equality ``g(x_t) = 0`` for t = 1..N, handled by augmented Lagrangian."""

    def __init__(self, g, g_jac, p):
        self.g = g
        self.g_jac = g_jac
        self.p = p


@dataclass
class SLQSettings:
    max_iterations: int = 50
    rel_tol: float = 1e-6
    constraint_tol: float = 1e-4
    reg_floor: float = 1e-6
    reg_max: float = 1e8
    reg_factor: float = 10.0
    line_search: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)
    constraint_penalty: float = 1e3
    al_outer_iterations: int = 8
    al_mu0: float = 10.0
    al_mu_factor: float = 10.0


@dataclass
class OCProblem:
    """Finite-horizon problem: ``N`` steps of ``dynamics`` from ``x0``.

    ``eq_constraints`` are state-input equalities (``ControlConstraint`` or
    ``LiftedStateConstraint``) handled by projection in the backward pass;
    ``state_constraints`` are state-only equalities handled by an
    augmented-Lagrangian outer loop.
    """

    dynamics: object
    cost: QuadraticCost
    x0: np.ndarray
    horizon_steps: int
    eq_constraints: list = field(default_factory=list)
    state_constraints: list = field(default_factory=list)
    settings: SLQSettings = field(default_factory=SLQSettings)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.horizon_steps < 1:
            raise ConfigurationError("horizon_steps must be >= 1")
        if self.dynamics.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.x0.shape != (self.dynamics.n,):
            raise ConfigurationError(f"x0 has shape {self.x0.shape}, expected ({self.dynamics.n},)")
        p = sum(c.p for c in self.eq_constraints)
        if p > self.dynamics.m:
            raise ConfigurationError(
                f"{p} equality constraint rows exceed control dimension {self.dynamics.m}"
            )

    @property
    def N(self):
        return self.horizon_steps

    @property
    def dt(self):
        return self.dynamics.dt


@dataclass
class Policy:
    """Time-varying affine policy ``u_t = u_bar_t + K_t (x - x_bar_t) + alpha k_t``."""

    nominal_states: np.ndarray
    nominal_controls: np.ndarray
    feedback_gains: np.ndarray
    feedforward: np.ndarray
    value_hessians: np.ndarray = None
    value_gradients: np.ndarray = None

    @property
    def N(self):
        return self.nominal_controls.shape[0]

    def control(self, t, x, alpha=0.0):
        t = min(t, self.N - 1)
        return (
            self.nominal_controls[t]
            + self.feedback_gains[t] @ (np.asarray(x) - self.nominal_states[t])
            + alpha * self.feedforward[t]
        )

    def shifted(self, steps, horizon=None):
        """Drop the first ``steps`` steps, repeating the last entries to keep ``horizon`` steps."""
        horizon = self.N if horizon is None else horizon
        idx = np.minimum(np.arange(steps, steps + horizon), self.N - 1)
        sidx = np.minimum(np.arange(steps, steps + horizon + 1), self.N)
        return Policy(
            self.nominal_states[sidx].copy(),
            self.nominal_controls[idx].copy(),
            self.feedback_gains[idx].copy(),
            np.zeros_like(self.feedforward[idx]),
        )


@dataclass
class SolveReport:
    iterations: int = 0
    cost_history: list = field(default_factory=list)
    max_constraint_violation_history: list = field(default_factory=list)
    wall_time_per_iteration: list = field(default_factory=list)
    converged: bool = False
    regularization: float = 0.0
    message: str = ""

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "cost", "violation", "ms"])
            for i, (c, v, t) in enumerate(
                zip(self.cost_history[1:], self.max_constraint_violation_history[1:], self.wall_time_per_iteration)
            ):
                w.writerow([i + 1, repr(c), repr(v), f"{t * 1e3:.6f}"])
