"""Benchmark problems and timing helpers for the solvers."""
from __future__ import annotations

import time

import numpy as np

from .control.models import base_reference, whole_body_hold_problem
from .control.slq import solve_slq
from .geometry import Pose2, Pose3
from .kinematics import default_model, joint_frames
from .localization.estimates import PointCloud
from .localization.icp import register_icp
from .planning.stomp import ObstacleScene, PathProblem

HOLD_Q0 = np.array([0.0, 0.35, 0.25, 0.0, -0.6, 0.0])


def hold_problem(N=100, model=None, dt=0.01):
    """Whole-body hold problem over the first ``N`` steps of the 1 m / 90 degree manoeuvre."""
    model = model or default_model()
    x0 = np.r_[0.0, 0.0, 0.0, HOLD_Q0]
    p = joint_frames(model, x0[None, :3], HOLD_Q0[None])[0, -1, :3, 3]
    ref = base_reference(Pose2(), Pose2(1.0, 0.0, np.pi / 2), 4.0, 4.0, dt, 1.0)
    return whole_body_hold_problem(model, x0, p, ref, dt, horizon=N)


def bench_slq(horizons=(50, 100, 200, 400), iterations=5, repeats=5):
    """Mean wall time per SLQ iteration for each horizon (best of ``repeats``)."""
    solve_slq(hold_problem(20), max_iterations=1)  # compile kernels
    rows = []
    for N in horizons:
        best = np.inf
        for _ in range(repeats):
            pr = hold_problem(N)
            _, rep = solve_slq(pr, max_iterations=iterations)
            w = rep.wall_time_per_iteration
            if w:
                best = min(best, float(np.mean(w)))
        rows.append({"horizon": int(N), "time_per_iteration_s": best})
    return rows


def linear_fit_r2(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    return float(coef[0]), float(coef[1]), 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0


def _box_surface(rng, lo, hi, n):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ext = hi - lo
    areas = np.array([ext[1] * ext[2], ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[2], ext[0] * ext[1], ext[0] * ext[1]])
    f = rng.choice(6, size=n, p=areas / areas.sum())
    p = lo + rng.random((n, 3)) * ext
    ax, side = f // 2, f % 2
    p[np.arange(n), ax] = np.where(side == 1, hi[ax], lo[ax])
    return p


STRUCTURED_BOXES = (
    ((-1.0, -1.0, -0.05), (2.0, 1.5, 0.0)),
    ((-1.0, 1.5, 0.0), (2.0, 1.55, 1.2)),
    ((-1.05, -1.0, 0.0), (-1.0, 1.5, 1.2)),
    ((0.2, 0.1, 0.0), (0.5, 0.6, 0.8)),
    ((1.0, -0.5, 0.0), (1.3, -0.3, 0.4)),
    ((0.6, 0.9, 0.0), (0.7, 1.0, 1.5)),
)


def structured_scene(rng, n=1000):
    """Points on a floor, two walls and three blocks: a room corner with furniture."""
    per = n // len(STRUCTURED_BOXES)
    parts = []
    for i, (lo, hi) in enumerate(STRUCTURED_BOXES):
        parts.append(_box_surface(rng, lo, hi, per + (n - per * len(STRUCTURED_BOXES) if i == 0 else 0)))
    return np.vstack(parts)


def random_transform(rng, max_angle_deg=20.0, max_shift=0.5):
    ax = rng.normal(size=3)
    ax /= np.linalg.norm(ax)
    ang = np.deg2rad(rng.uniform(0.0, max_angle_deg))
    tr = rng.normal(size=3)
    tr *= rng.uniform(0.0, max_shift) / np.linalg.norm(tr)
    return Pose3.from_rotvec(ax * ang, tr)


def bench_icp(trials=100, seed=0, n=1000, sigma=0.0):
    """ICP recovery of random rigid transforms on structured scenes."""
    rows = []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        ref = structured_scene(rng, n)
        T = random_transform(rng)
        src = T.inverse().transform_points(ref)
        if sigma > 0:
            src = src + rng.normal(0.0, sigma, src.shape)
        t0 = time.perf_counter()
        est = register_icp(PointCloud(src), PointCloud(ref))
        elapsed = time.perf_counter() - t0
        dt, dr = est.pose.distance(T)
        rows.append(
            {"trial": k, "translation_error_m": dt, "rotation_error_deg": float(np.rad2deg(dr)), "iterations": est.iterations, "time_s": elapsed}
        )
    return rows


SWEEP_START = np.array([-1.0, 0.3, 0.0, 0.0, 0.8, 0.0])
SWEEP_GOAL = np.array([1.0, 0.3, 0.0, 0.0, 0.8, 0.0])


def midpoint_sphere_case(model=None, radius=0.25, waypoints=50):
    """Joint-1 sweep with a sphere centred on the tool position at the straight-line midpoint."""
    model = model or default_model()
    mid = 0.5 * (SWEEP_START + SWEEP_GOAL)
    centre = joint_frames(model, np.zeros(3), mid)[0, -1, :3, 3]
    scene = ObstacleScene([(centre, radius)])
    return PathProblem(model, SWEEP_START, SWEEP_GOAL, waypoints), scene
