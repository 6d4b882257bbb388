"""Stochastic trajectory optimisation (STOMP) for arm paths with an optional task constraint.

A path is a sequence of M joint configurations with fixed end points.  Noisy
rollouts are drawn from the inverse of the finite-difference acceleration
metric, optionally projected onto a task manifold (for example "tool axis
vertical"), and combined with per-waypoint softmax weights.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import PlanningError, PlanningFailure
from ..geometry import Pose2, hat
from ..kinematics import jacobian_from_frames, joint_frames, link_points

CLEARANCE_CAP = 1e6
DENSE_STEP = 0.01


@dataclass
class ObstacleScene:
    """Spheres ``(center, radius)`` and axis-aligned boxes ``(lo, hi)`` in the world frame."""

    spheres: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    clearance: float = 0.0

    def __post_init__(self):
        if self.clearance < 0:
            raise PlanningError("clearance must be >= 0")
        self.spheres = [(np.asarray(c, dtype=float), float(r)) for c, r in self.spheres]
        self.boxes = [(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)) for lo, hi in self.boxes]

    @property
    def empty(self):
        return not self.spheres and not self.boxes

    def distance(self, P):
        """Signed distance of points ``P`` (..., 3) to the nearest obstacle (no clearance)."""
        P = np.asarray(P, dtype=float)
        d = np.full(P.shape[:-1], np.inf)
        for c, r in self.spheres:
            d = np.minimum(d, np.linalg.norm(P - c, axis=-1) - r)
        for lo, hi in self.boxes:
            center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            q = np.abs(P - center) - half
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            inside = np.minimum(q.max(axis=-1), 0.0)
            d = np.minimum(d, outside + inside)
        return d

    def to_dict(self):
        return {
            "spheres": [{"center": c.tolist(), "radius": r} for c, r in self.spheres],
            "boxes": [{"min": lo.tolist(), "max": hi.tolist()} for lo, hi in self.boxes],
            "clearance": self.clearance,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            [(s["center"], s["radius"]) for s in doc.get("spheres", [])],
            [(b["min"], b["max"]) for b in doc.get("boxes", [])],
            doc.get("clearance", 0.0),
        )


def _clearances(scene, model, base, Q, per_link=10):
    """Per-configuration minimum clearance for a batch ``Q`` (B, n)."""
    Q = np.atleast_2d(Q)
    if scene.empty:
        return np.full(Q.shape[0], CLEARANCE_CAP)
    bases = np.broadcast_to(np.asarray(base, dtype=float), (Q.shape[0], 3))
    pts = link_points(model, bases, Q, per_link)
    d = scene.distance(pts) - scene.clearance
    return np.minimum(d.min(axis=1), CLEARANCE_CAP)


def signed_clearance(scene: ObstacleScene, model, base, q) -> float:
    """Smallest obstacle distance minus clearance over sampled link points; negative is a collision."""
    b = base.as_array() if isinstance(base, Pose2) else np.asarray(base, dtype=float)
    return float(_clearances(scene, model, b, np.asarray(q, dtype=float)[None])[0])


class ToolAxisConstraint:
    """Keep the tool z axis parallel to ``axis`` (world frame); residual ``z_tool x axis``."""

    def __init__(self, axis=(0.0, 0.0, -1.0)):
        a = np.asarray(axis, dtype=float)
        self.axis = a / np.linalg.norm(a)

    def residual(self, model, base, Q):
        F = joint_frames(model, np.broadcast_to(base, (Q.shape[0], 3)), Q)
        return np.cross(F[:, -1, :3, 2], self.axis), F

    def jacobian(self, model, base, Q, F):
        J = jacobian_from_frames(model, F, np.broadcast_to(base, (Q.shape[0], 3)))[:, 3:, 3:]
        Ha = hat(self.axis)
        Hz = np.stack([hat(z) for z in F[:, -1, :3, 2]])
        return Ha @ Hz @ J

    def project(self, model, base, Q, tol=1e-12, max_iter=20):
        """Newton min-norm projection of each row of ``Q`` onto the manifold."""
        Q = np.array(Q, dtype=float)
        for _ in range(max_iter):
            r, F = self.residual(model, base, Q)
            err = np.linalg.norm(r, axis=1)
            active = err > tol
            if not np.any(active):
                break
            J = self.jacobian(model, base, Q[active], F[active])
            for j, i in enumerate(np.flatnonzero(active)):
                Q[i] -= np.linalg.lstsq(J[j], r[i], rcond=1e-10)[0]
        return Q

    def violation(self, model, base, Q):
        return np.linalg.norm(self.residual(model, base, np.atleast_2d(Q))[0], axis=1)


@dataclass
class PathProblem:
    model: object
    start: np.ndarray
    goal: np.ndarray
    waypoints: int = 50
    base: Pose2 = field(default_factory=Pose2)
    task: ToolAxisConstraint = None
    smoothness_weight: float = 1.0
    obstacle_weight: float = 100.0
    safety_margin: float = 0.05

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        if self.waypoints < 3:
            raise PlanningError("waypoints must be >= 3")
        lo, hi = self.limits
        for name, q in (("start", self.start), ("goal", self.goal)):
            if q.shape != (self.model.n_joints,):
                raise PlanningError(f"{name} has wrong dimension")
            if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
                raise PlanningError(f"{name} configuration outside joint limits")

    @property
    def limits(self):
        lim = np.asarray(self.model.joint_limits, dtype=float)
        return lim[:, 0], lim[:, 1]

    def to_dict(self):
        return {
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "waypoints": self.waypoints,
            "base": self.base.as_array().tolist(),
            "tool_axis": None if self.task is None else self.task.axis.tolist(),
            "smoothness_weight": self.smoothness_weight,
            "obstacle_weight": self.obstacle_weight,
            "safety_margin": self.safety_margin,
        }

    @classmethod
    def from_dict(cls, doc, model):
        axis = doc.get("tool_axis")
        return cls(
            model,
            doc["start"],
            doc["goal"],
            doc.get("waypoints", 50),
            Pose2(*doc.get("base", (0.0, 0.0, 0.0))),
            None if axis is None else ToolAxisConstraint(axis),
            doc.get("smoothness_weight", 1.0),
            doc.get("obstacle_weight", 100.0),
            doc.get("safety_margin", 0.05),
        )


def smoothness_matrix(M):
    """Acceleration metric on the M - 2 interior waypoints.

    With ``A`` the second-difference operator over the full path (end points
    duplicated, so the path starts and ends at rest), the cost of a joint
    trajectory is ``1/2 |A q|^2``.  Returns ``(R, Ab)`` where ``R`` is the
    interior block of ``A'A`` and ``Ab`` maps (start, goal) to the linear term.
    """
    A = np.zeros((M, M))
    for i in range(M):
        lo, hi = max(i - 1, 0), min(i + 1, M - 1)
        A[i, lo] += 1.0
        A[i, i] -= 2.0
        A[i, hi] += 1.0
    H = A.T @ A
    return H[1:-1, 1:-1], H[1:-1][:, [0, M - 1]]


def smoothness_cost(path):
    """Cost and the (M, n) per-waypoint accelerations."""
    padded = np.vstack([path[:1], path, path[-1:]])
    acc = padded[:-2] - 2.0 * padded[1:-1] + padded[2:]
    return 0.5 * float(np.sum(acc * acc)), acc


def smooth_interpolation(start, goal, M):
    """Minimiser of the smoothness cost with fixed end points."""
    R, Ab = smoothness_matrix(M)
    rhs = -Ab @ np.vstack([start, goal])
    inner = cho_solve(cho_factor(R), rhs)
    return np.vstack([start, inner, goal])


def densify(path, step=DENSE_STEP):
    """Linear interpolation so no joint moves more than ``step`` between samples."""
    out = [path[:1]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, int(math.ceil(np.max(np.abs(b - a)) / step)))
        s = np.arange(1, n + 1)[:, None] / n
        out.append(a + s * (b - a))
    return np.vstack(out)


@dataclass
class StompResult:
    path: np.ndarray
    cost: float
    cost_history: list
    iterations: int
    min_clearance: float


class _Costs:
    def __init__(self, problem, scene):
        self.pr = problem
        self.scene = scene
        self.base = problem.base.as_array()

    def waypoint_obstacle(self, Q):
        if self.scene.empty:
            return np.zeros(Q.shape[0])
        pts = link_points(self.pr.model, np.broadcast_to(self.base, (Q.shape[0], 3)), Q, 10)
        d = self.scene.distance(pts) - self.scene.clearance
        return np.sum(np.maximum(self.pr.safety_margin - d, 0.0), axis=1)

    def total(self, path):
        sm, _ = smoothness_cost(path)
        obs = self.waypoint_obstacle(path[1:-1])
        return self.pr.smoothness_weight * sm + self.pr.obstacle_weight * float(obs.sum())


def plan_stomp(
    problem: PathProblem,
    scene: ObstacleScene,
    seed: int = 0,
    *,
    rollouts: int = 16,
    iterations: int = 200,
    noise: float = 0.3,
    noise_decay: float = 0.99,
    h: float = 10.0,
    patience: int = 20,
):
    """Plan a joint path from ``problem.start`` to ``problem.goal`` avoiding ``scene``.

    Deterministic for a fixed ``seed``.  Raises :class:`PlanningFailure`
    carrying the best path found when no valid path exists after the budget.
    """
    pr = problem
    base = pr.base.as_array()
    lo, hi = pr.limits
    for name, q in (("start", pr.start), ("goal", pr.goal)):
        if signed_clearance(scene, pr.model, base, q) < 0:
            raise PlanningError(f"{name} configuration in collision")
        if pr.task is not None and pr.task.violation(pr.model, base, q)[0] > 1e-3:
            raise PlanningError(f"{name} configuration violates the task constraint")
    if np.array_equal(pr.start, pr.goal):
        return StompResult(pr.start[None].copy(), 0.0, [0.0], 0, signed_clearance(scene, pr.model, base, pr.start))

    M = pr.waypoints
    n = pr.start.shape[0]
    rng = np.random.default_rng(seed)
    costs = _Costs(pr, scene)
    R, _ = smoothness_matrix(M)
    Rinv = cho_solve(cho_factor(R), np.eye(M - 2))
    # smoothing matrix for the update, columns scaled so the largest entry is 1 / (M - 2)
    Msmooth = Rinv / (Rinv.max(axis=0, keepdims=True) * (M - 2))
    L = np.linalg.cholesky(Rinv / Rinv.diagonal().max())

    path = smooth_interpolation(pr.start, pr.goal, M)
    if pr.task is not None:
        path[1:-1] = pr.task.project(pr.model, base, path[1:-1])
    path[1:-1] = np.clip(path[1:-1], lo, hi)
    cost = costs.total(path)
    history = [cost]
    sigma = noise
    stall = 0
    it = 0
    for it in range(1, iterations + 1):
        if stall >= patience and _valid(pr, scene, path):
            break
        eps = sigma * np.einsum("ij,kjd->kid", L, rng.standard_normal((rollouts, M - 2, n)))
        noisy = path[1:-1][None] + eps
        flat = noisy.reshape(-1, n)
        if pr.task is not None:
            flat = pr.task.project(pr.model, base, flat)
        flat = np.clip(flat, lo, hi)
        noisy = flat.reshape(rollouts, M - 2, n)
        eps = noisy - path[1:-1][None]
        S = pr.obstacle_weight * costs.waypoint_obstacle(flat).reshape(rollouts, M - 2)
        for k in range(rollouts):
            full = np.vstack([pr.start, noisy[k], pr.goal])
            _, acc = smoothness_cost(full)
            S[k] += pr.smoothness_weight * 0.5 * np.sum(acc[1:-1] ** 2, axis=1)
        smin, smax = S.min(axis=0), S.max(axis=0)
        spread = smax - smin
        P = np.zeros_like(S)
        live = spread > 0.0
        if np.any(live):
            E = np.exp(-h * (S[:, live] - smin[live]) / spread[live])
            P[:, live] = E / E.sum(axis=0)
        delta = np.einsum("ki,kid->id", P, eps)
        candidate = path.copy()
        candidate[1:-1] = path[1:-1] + Msmooth @ delta
        if pr.task is not None:
            candidate[1:-1] = pr.task.project(pr.model, base, candidate[1:-1])
        candidate[1:-1] = np.clip(candidate[1:-1], lo, hi)
        c_new = costs.total(candidate)
        if c_new < cost:
            path, cost = candidate, c_new
            stall = 0
        else:
            stall += 1
        history.append(cost)
        sigma *= noise_decay

    dense = densify(path)
    clear = float(_clearances(scene, pr.model, base, dense).min())
    if not _valid(pr, scene, path, dense):
        raise PlanningFailure(
            "no collision-free path within the iteration budget",
            best_cost=cost,
            max_penetration=max(0.0, -clear),
            path=path,
        )
    return StompResult(path, cost, history, it, clear)


def _valid(pr, scene, path, dense=None):
    dense = densify(path) if dense is None else dense
    if np.min(_clearances(scene, pr.model, pr.base.as_array(), dense)) < 0:
        return False
    lo, hi = pr.limits
    if np.any(path < lo - 1e-12) or np.any(path > hi + 1e-12):
        return False
    if pr.task is not None and np.max(pr.task.violation(pr.model, pr.base.as_array(), path)) > 1e-3:
        return False
    return True


def save_path_csv(path, filename):
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["waypoint"] + [f"q{j + 1}" for j in range(path.shape[1])])
        for i, q in enumerate(path):
            w.writerow([i] + [repr(float(v)) for v in q])


def load_path_csv(filename):
    with open(filename) as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(v) for v in r[1:]] for r in rows])


def load_scene(filename):
    with open(filename) as fh:
        return ObstacleScene.from_dict(json.load(fh))


def save_scene(scene, filename):
    with open(filename, "w") as fh:
        json.dump(scene.to_dict(), fh, indent=2)
