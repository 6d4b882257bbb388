import numpy as np
import pytest
from scipy.linalg import solve_banded

from fabsim.bench import midpoint_sphere_case
from fabsim.errors import PlanningError, PlanningFailure
from fabsim.geometry import Pose2
from fabsim.kinematics import joint_frames, link_points
from fabsim.planning.stomp import (
    CLEARANCE_CAP,
    ObstacleScene,
    PathProblem,
    ToolAxisConstraint,
    densify,
    load_path_csv,
    load_scene,
    plan_stomp,
    save_path_csv,
    save_scene,
    signed_clearance,
    smoothness_cost,
)

START = np.array([-0.8, 0.2, 0.1, 0.3, 0.6, -0.2])
GOAL = np.array([0.9, 0.5, -0.3, -0.4, 1.0, 0.5])


def banded_oracle(start, goal, M):
    """Minimise the padded second-difference energy with a pentadiagonal solve."""
    # rows of the acceleration operator over the full path, end points repeated
    rows = []
    for i in range(M):
        r = np.zeros(M)
        r[max(i - 1, 0)] += 1.0
        r[i] -= 2.0
        r[min(i + 1, M - 1)] += 1.0
        rows.append(r)
    A = np.array(rows)
    inner = slice(1, M - 1)
    Ai, Ab = A[:, inner], A[:, [0, M - 1]]
    H = Ai.T @ Ai
    n = M - 2
    ab = np.zeros((5, n))
    for k in range(-2, 3):
        d = np.diagonal(H, k)
        if k >= 0:
            ab[2 - k, k:] = d
        else:
            ab[2 - k, : n + k] = d
    rhs = -Ai.T @ Ab @ np.vstack([start, goal])
    return np.vstack([start, solve_banded((2, 2), ab, rhs), goal])


def test_empty_scene_returns_smoothness_optimum(model):
    pr = PathProblem(model, START, GOAL, 40)
    res = plan_stomp(pr, ObstacleScene(), seed=0)
    assert np.max(np.abs(res.path - banded_oracle(START, GOAL, 40))) <= 1e-6


def test_start_equals_goal(model):
    res = plan_stomp(PathProblem(model, START, START, 30), ObstacleScene(), seed=0)
    assert res.path.shape == (1, 6)
    assert res.cost == 0.0


def test_problem_validation(model):
    with pytest.raises(PlanningError):
        PathProblem(model, START, GOAL, 2)
    bad = START.copy()
    bad[2] = 3.0
    with pytest.raises(PlanningError):
        PathProblem(model, bad, GOAL, 10)
    with pytest.raises(PlanningError):
        ObstacleScene(clearance=-0.1)


def point_sphere_clearance(model, q, spheres, per_link=10):
    pts = link_points(model, np.zeros((1, 3)), np.atleast_2d(q), per_link)[0]
    best = np.inf
    for p in pts:
        for c, r in spheres:
            best = min(best, float(np.sqrt(np.sum((p - c) ** 2))) - r)
    return best


def test_midpoint_sphere_straight_line_collides_planned_path_clear(model):
    pr, scene = midpoint_sphere_case(model)
    line = densify(np.vstack([pr.start, pr.goal]))
    spheres = scene.spheres
    assert min(point_sphere_clearance(model, q, spheres) for q in line[:: max(1, len(line) // 40)]) < 0
    for seed in range(3):
        res = plan_stomp(pr, scene, seed)
        dense = densify(res.path)
        assert np.max(np.abs(np.diff(dense, axis=0))) <= 0.01 + 1e-12
        assert min(point_sphere_clearance(model, q, spheres) for q in dense) >= 0
        lo, hi = model.joint_limits.T
        assert np.all(res.path >= lo) and np.all(res.path <= hi)
        assert np.all(np.diff(res.cost_history) <= 0)


def test_determinism(model):
    pr, scene = midpoint_sphere_case(model)
    a = plan_stomp(pr, scene, 4)
    b = plan_stomp(pr, scene, 4)
    assert a.path.tobytes() == b.path.tobytes()
    assert a.cost_history == b.cost_history


def test_failure_reports_best_cost(model):
    pr, scene = midpoint_sphere_case(model)
    with pytest.raises(PlanningFailure) as exc:
        plan_stomp(pr, scene, 0, iterations=1, noise=1e-6)
    assert np.isfinite(exc.value.best_cost)
    assert exc.value.max_penetration > 0
    assert exc.value.path is not None


def test_start_in_collision_rejected(model):
    pr, scene = midpoint_sphere_case(model)
    mid = 0.5 * (pr.start + pr.goal)
    with pytest.raises(PlanningError, match="start"):
        plan_stomp(PathProblem(model, mid, pr.goal, 20), scene, 0)


def test_signed_clearance_cap_and_boundary(model, rng):
    assert signed_clearance(ObstacleScene(), model, Pose2(), START) == CLEARANCE_CAP
    pts = link_points(model, np.zeros((1, 3)), START[None])[0]
    p = pts[17]
    for _ in range(5):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        r = 0.3
        c = p + r * u
        # every other sample point stays outside this sphere in general; check the minimum is 0
        scene = ObstacleScene([(c, r)])
        d = signed_clearance(scene, model, Pose2(), START)
        assert d <= 1e-9
        assert d == pytest.approx(point_sphere_clearance(model, START, scene.spheres), abs=1e-9)
    # sphere touching the tool centre point from beyond the flange
    F = joint_frames(model, np.zeros(3), START)[0, -1]
    tcp, z = F[:3, 3], F[:3, 2]
    scene = ObstacleScene([(tcp + 0.05 * z, 0.05)])
    assert abs(signed_clearance(scene, model, Pose2(), START)) <= 1e-9


def box_distance_oracle(p, lo, hi):
    outside = np.sqrt(sum(max(lo[i] - p[i], 0.0, p[i] - hi[i]) ** 2 for i in range(3)))
    if outside > 0:
        return outside
    return -min(min(p[i] - lo[i], hi[i] - p[i]) for i in range(3))


def test_signed_clearance_matches_brute_force(model, rng):
    for _ in range(20):
        spheres = [(rng.uniform(-1, 3, 3), rng.uniform(0.05, 0.4)) for _ in range(3)]
        boxes = []
        for _ in range(2):
            lo = rng.uniform(-1, 2.5, 3)
            boxes.append((lo, lo + rng.uniform(0.1, 0.6, 3)))
        clearance = rng.uniform(0, 0.05)
        scene = ObstacleScene(spheres, boxes, clearance)
        q = rng.uniform(-1, 1, 6)
        pts = link_points(model, np.zeros((1, 3)), q[None])[0]
        best = np.inf
        for p in pts:
            for c, r in spheres:
                best = min(best, float(np.linalg.norm(p - c)) - r)
            for lo, hi in boxes:
                best = min(best, box_distance_oracle(p, lo, hi))
        assert signed_clearance(scene, model, Pose2(), q) == pytest.approx(best - clearance, abs=1e-9)


def test_task_constrained_plan_and_projection_idempotent(model):
    task = ToolAxisConstraint()
    base = np.zeros(3)
    ends = task.project(model, base, np.vstack([START, GOAL]))
    pr = PathProblem(model, ends[0], ends[1], 30, task=task)
    res = plan_stomp(pr, ObstacleScene(), 0)
    assert np.max(task.violation(model, base, res.path)) <= 1e-3
    again = task.project(model, base, res.path)
    assert np.max(np.abs(again - res.path)) <= 1e-9


def test_smoothness_cost_of_straight_line():
    path = np.linspace(0, 1, 11)[:, None] * np.ones((1, 2))
    cost, acc = smoothness_cost(path)
    # only the two end points carry acceleration when the path starts and stops
    assert np.allclose(acc[1:-1], 0.0)
    assert cost == pytest.approx(0.5 * 2 * 2 * 0.1**2)


def test_csv_and_scene_roundtrip(tmp_path, model):
    pr, scene = midpoint_sphere_case(model)
    res = plan_stomp(PathProblem(model, START, GOAL, 12), ObstacleScene(), 0)
    save_path_csv(res.path, tmp_path / "path.csv")
    assert np.array_equal(load_path_csv(tmp_path / "path.csv"), res.path)
    header = (tmp_path / "path.csv").read_text().splitlines()[0]
    assert header == "waypoint,q1,q2,q3,q4,q5,q6"
    save_scene(scene, tmp_path / "scene.json")
    back = load_scene(tmp_path / "scene.json")
    assert np.array_equal(back.spheres[0][0], scene.spheres[0][0])
    problem_doc = pr.to_dict()
    assert PathProblem.from_dict(problem_doc, model).waypoints == pr.waypoints
