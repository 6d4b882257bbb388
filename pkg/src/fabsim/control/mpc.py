"""Receding-horizon driver around :func:`solve_slq`."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import FabsimError
from .slq import solve_slq


@dataclass
class MPCStats:
    latencies: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    degraded_steps: list = field(default_factory=list)

    def summary(self):
        lat = np.asarray(self.latencies) * 1e3
        if lat.size == 0:
            return {"median_ms": 0.0, "p99_ms": 0.0, "max_ms": 0.0, "mean_ms": 0.0, "degraded": 0}
        return {
            "median_ms": float(np.median(lat)),
            "p99_ms": float(np.percentile(lat, 99)),
            "max_ms": float(lat.max()),
            "mean_ms": float(lat.mean()),
            "degraded": len(self.degraded_steps),
        }


class MPCController:
    """Re-solve a finite-horizon problem at every control tick.

    ``problem_factory(t_index, x)`` builds the problem for the current tick.
    The first call solves from zero controls (or ``init``) to convergence;
    afterwards the previous policy shifted by one step, with the last control
    repeated, is the warm start and only ``iterations`` SLQ iterations are run.
    """

    def __init__(self, problem_factory, iterations=1, cold_iterations=None, init=None):
        if not 1 <= iterations:
            raise ValueError("iterations must be >= 1")
        self.problem_factory = problem_factory
        self.iterations = iterations
        self.cold_iterations = cold_iterations
        self.init = init
        self.policy = None
        self.t_index = 0
        self.degraded = False
        self.stats = MPCStats()

    def reset(self):
        self.policy = None
        self.t_index = 0
        self.degraded = False
        self.stats = MPCStats()

    def step(self, x_measured, t_now=None):
        """Control to apply at ``x_measured``; advances the internal tick counter."""
        x = np.asarray(x_measured, dtype=float)
        t0 = time.perf_counter()
        try:
            problem = self.problem_factory(self.t_index, x)
            if self.policy is None:
                warm, budget = self.init, self.cold_iterations
            else:
                warm = self.policy.shifted(1, problem.N)
                budget = self.iterations
            policy, report = solve_slq(problem, warm, max_iterations=budget)
            self.policy = policy
            self.degraded = False
            u = policy.nominal_controls[0] + policy.feedback_gains[0] @ (x - policy.nominal_states[0])
            self.stats.iterations.append(report.iterations)
        except FabsimError:
            if self.policy is None:
                raise
            # fall back to the previous solution's feedback law
            self.policy = self.policy.shifted(1, self.policy.N)
            u = self.policy.control(0, x)
            self.degraded = True
            self.stats.degraded_steps.append(self.t_index)
            self.stats.iterations.append(0)
        self.stats.latencies.append(time.perf_counter() - t0)
        self.t_index += 1
        return u


def mpc_step(controller: MPCController, x_measured, t_now=None):
    return controller.step(x_measured, t_now)
