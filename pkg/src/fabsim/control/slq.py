"""Constrained sequential linear-quadratic (SLQ) optimal control."""
from __future__ import annotations

import time

import numpy as np

from ..errors import ConfigurationError, SolverError
from ._kernels import backward_pass
from .problem import LiftedStateConstraint, Policy, SolveReport


def _closed_loop(dyn, x0, X_bar, U_bar, K, k, alpha):
    fast = getattr(dyn, "closed_loop_rollout", None)
    if fast is not None:
        return fast(x0, X_bar, U_bar, K, k, alpha)
    N = U_bar.shape[0]
    X = np.empty((N + 1, X_bar.shape[1]))
    U = np.empty_like(U_bar)
    X[0] = x0
    for t in range(N):
        U[t] = U_bar[t] + K[t] @ (X[t] - X_bar[t]) + alpha * k[t]
        X[t + 1] = dyn.step(X[t], U[t])
    return X, U


def _check_finite(X):
    bad = ~np.all(np.isfinite(X), axis=1)
    if np.any(bad):
        raise SolverError("rollout diverged to a non-finite state", step=int(np.argmax(bad)))


def _open_loop(dyn, x0, U):
    N, m = U.shape
    zeros = np.zeros((N, m, dyn.n))
    X_bar = np.zeros((N + 1, dyn.n))
    return _closed_loop(dyn, x0, X_bar, U, zeros, np.zeros((N, m)), 0.0)


class _Evaluator:
    """Merit function and derivatives including augmented-Lagrangian terms."""

    def __init__(self, problem):
        self.problem = problem
        N = problem.N
        self.lam = [np.zeros((N, c.p)) for c in problem.state_constraints]
        self.mu = problem.settings.al_mu0

    def eq_values(self, X, U):
        vals = [c.evaluate(X, U) for c in self.problem.eq_constraints]
        return np.concatenate(vals, axis=1) if vals else np.zeros((U.shape[0], 0))

    def state_values(self, X):
        vals = [c.g(X[1:]) for c in self.problem.state_constraints]
        return vals

    def violation(self, X, U):
        v = 0.0
        eq = self.eq_values(X, U)
        if eq.size:
            v = float(np.max(np.abs(eq)))
        for g in self.state_values(X):
            if g.size:
                v = max(v, float(np.max(np.abs(g))))
        return v

    def merit(self, X, U):
        pr = self.problem
        J = pr.cost.total(X, U)
        eq = self.eq_values(X, U)
        if eq.size:
            J += pr.settings.constraint_penalty * float(np.sum(eq * eq))
        for lam, g in zip(self.lam, self.state_values(X)):
            J += float(np.sum(lam * g)) + 0.5 * self.mu * float(np.sum(g * g))
        return J

    def derivatives(self, X, U):
        pr = self.problem
        lx, lu, lxx, luu, lux, lfx, lfxx = pr.cost.derivatives(X, U)
        for lam, c in zip(self.lam, pr.state_constraints):
            g = c.g(X[1:])
            G = c.g_jac(X[1:])
            w = lam + self.mu * g
            grad = np.einsum("tp,tpn->tn", w, G)
            hess = self.mu * np.einsum("tpi,tpj->tij", G, G)
            lx[1:] += grad[:-1]
            lxx[1:] += hess[:-1]
            lfx = lfx + grad[-1]
            lfxx = lfxx + hess[-1]
        return lx, lu, lxx, luu, lux, lfx, lfxx

    def constraint_linearization(self, X, U, A, B):
        pr = self.problem
        N, m = U.shape
        n = X.shape[1]
        P = sum(c.p for c in pr.eq_constraints)
        C = np.zeros((N, max(P, 1), m))
        D = np.zeros((N, max(P, 1), n))
        e = np.zeros((N, max(P, 1)))
        row = 0
        for c in pr.eq_constraints:
            if isinstance(c, LiftedStateConstraint):
                Ci, Di, ei = c.linearize(X, U, A, B)
            else:
                Ci, Di, ei = c.linearize(X, U)
            C[:, row : row + c.p] = Ci
            D[:, row : row + c.p] = Di
            e[:, row : row + c.p] = ei
            row += c.p
        return C, D, e, np.full(N, P, dtype=np.int64)


def _validate(problem):
    R = problem.cost.R
    if R.shape != (problem.dynamics.m, problem.dynamics.m):
        raise ConfigurationError("control weight R has the wrong shape")
    floor = problem.settings.reg_floor
    min_eig = float(np.linalg.eigvalsh(0.5 * (R + R.T))[0])
    if min_eig < floor:
        raise ConfigurationError(
            f"control weight R has eigenvalue {min_eig:.3g} below the regularisation floor {floor:g}"
        )


def _backward(problem, ev, X, U, reg, report):
    dyn = problem.dynamics
    st = problem.settings
    A, B = dyn.linearize(X[:-1], U)
    derivs = ev.derivatives(X, U)
    C, D, e, p_rows = ev.constraint_linearization(X, U, A, B)
    while True:
        try:
            ok, K, k, S, s, dv1, dv2 = backward_pass(A, B, *derivs, C, D, e, p_rows, reg)
        except np.linalg.LinAlgError:
            raise SolverError("singular KKT system: equality constraints are rank deficient") from None
        if ok:
            return K, k, S, s, dv1, dv2, reg
        reg = max(reg * st.reg_factor, st.reg_floor)
        if reg > st.reg_max:
            raise SolverError("control Hessian not positive definite at maximum regularisation")
        report.regularization = reg


def solve_slq(problem, init=None, *, max_iterations=None):
    """Solve ``problem`` by constrained SLQ.

    ``init`` is a control sequence (N, m), a :class:`Policy` used for a
    closed-loop warm-start rollout, or ``None`` for zero controls.  Returns
    ``(policy, report)``; when converged, the policy gains come from a final
    backward pass about the returned nominal trajectory.
    """
    _validate(problem)
    dyn = problem.dynamics
    st = problem.settings
    N, m = problem.N, dyn.m
    budget = st.max_iterations if max_iterations is None else max_iterations

    if init is None:
        X, U = _open_loop(dyn, problem.x0, np.zeros((N, m)))
    elif isinstance(init, Policy):
        X, U = _closed_loop(
            dyn, problem.x0, init.nominal_states, init.nominal_controls, init.feedback_gains, init.feedforward, 0.0
        )
    else:
        U0 = np.asarray(init, dtype=float)
        if U0.shape != (N, m):
            raise ConfigurationError(f"initial controls have shape {U0.shape}, expected {(N, m)}")
        X, U = _open_loop(dyn, problem.x0, U0)
    _check_finite(X)

    ev = _Evaluator(problem)
    report = SolveReport()
    outer = st.al_outer_iterations if problem.state_constraints else 1
    reg = 0.0
    K = k = S = s = None
    iterations = 0
    for outer_it in range(outer):
        J = ev.merit(X, U)
        report.cost_history.append(J)
        report.max_constraint_violation_history.append(ev.violation(X, U))
        converged = False
        while iterations < budget:
            t0 = time.perf_counter()
            K, k, S, s, dv1, dv2, reg = _backward(problem, ev, X, U, reg, report)
            viol = ev.violation(X, U)
            expected = -(dv1 + dv2)
            if abs(expected) <= st.rel_tol * max(abs(J), 1e-12) and viol <= st.constraint_tol:
                converged = True
                break
            accepted = False
            for alpha in st.line_search:
                Xn, Un = _closed_loop(dyn, problem.x0, X, U, K, k, alpha)
                if not np.all(np.isfinite(Xn)):
                    continue
                Jn = ev.merit(Xn, Un)
                if Jn < J:
                    accepted = True
                    break
            iterations += 1
            if accepted:
                rel = (J - Jn) / max(abs(J), 1e-12)
                X, U, J = Xn, Un, Jn
                reg = reg / st.reg_factor if reg > st.reg_floor else 0.0
                viol = ev.violation(X, U)
                report.cost_history.append(J)
                report.max_constraint_violation_history.append(viol)
                report.wall_time_per_iteration.append(time.perf_counter() - t0)
                if rel < st.rel_tol and viol <= st.constraint_tol:
                    K, k, S, s, *_ = _backward(problem, ev, X, U, reg, report)
                    converged = True
                    break
            else:
                report.cost_history.append(J)
                report.max_constraint_violation_history.append(viol)
                report.wall_time_per_iteration.append(time.perf_counter() - t0)
                reg = max(reg * st.reg_factor, st.reg_floor)
                if reg > st.reg_max:
                    report.message = "line search failed at maximum regularisation"
                    break
        if not problem.state_constraints:
            report.converged = converged
            break
        # augmented-Lagrangian multiplier update
        gs = ev.state_values(X)
        worst = max((float(np.max(np.abs(g))) for g in gs if g.size), default=0.0)
        if converged and worst <= st.constraint_tol:
            report.converged = True
            break
        for lam, g in zip(ev.lam, gs):
            lam += ev.mu * g
        ev.mu *= st.al_mu_factor
        if iterations >= budget:
            break
    if K is None:
        K, k, S, s, *_ = _backward(problem, ev, X, U, reg, report)
    report.iterations = iterations
    report.regularization = reg
    policy = Policy(X, U, K, k, value_hessians=S, value_gradients=s)
    return policy, report


def rollout(problem, policy, x0=None, disturbance=None, *, seed=None, feedback=True):
    """Closed-loop rollout ``u_t = u_bar_t + K_t (x_t - x_bar_t)`` with additive disturbance.

    ``disturbance`` is ``None``, an (N, n) array added to each successor
    state, or a standard deviation used with ``seed`` to draw Gaussian noise.
    Set ``feedback=False`` for the open-loop comparison (K = 0).
    """
    dyn = problem.dynamics
    N = policy.N
    x0 = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (dyn.n,):
        raise ConfigurationError("x0 dimension mismatch")
    if disturbance is None:
        W = np.zeros((N, dyn.n))
    elif np.isscalar(disturbance):
        W = np.random.default_rng(seed).normal(0.0, float(disturbance), size=(N, dyn.n))
    else:
        W = np.asarray(disturbance, dtype=float)
        if W.shape != (N, dyn.n):
            raise ConfigurationError(f"disturbance has shape {W.shape}, expected {(N, dyn.n)}")
    X = np.empty((N + 1, dyn.n))
    U = np.empty((N, dyn.m))
    X[0] = x0
    for t in range(N):
        du = policy.feedback_gains[t] @ (X[t] - policy.nominal_states[t]) if feedback else 0.0
        U[t] = policy.nominal_controls[t] + du
        X[t + 1] = dyn.step(X[t], U[t]) + W[t]
    return X, U


def constraint_consistency(problem, policy):
    """max_t |C_t K_t + D_t| along the nominal trajectory (0 when gains respect the constraints)."""
    ev = _Evaluator(problem)
    X, U = policy.nominal_states, policy.nominal_controls
    A, B = problem.dynamics.linearize(X[:-1], U)
    C, D, _, p_rows = ev.constraint_linearization(X, U, A, B)
    if p_rows[0] == 0:
        return 0.0
    return float(np.max(np.abs(C @ policy.feedback_gains + D)))
