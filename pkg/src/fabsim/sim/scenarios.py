"""Scenario execution: brick wall, mesh feedback and end-effector hold.

Frames used by the brick-wall loop:

* world ``W``, identical to the true CAD frame of the site;
* map ``M``, the robot base frame at start-up, in which the reference scan,
  the tag survey and all pose estimates live;
* ``T_MC`` (CAD -> map) is only known through CAD alignment.
"""
from __future__ import annotations

import copy
import json
import math
import os
from functools import lru_cache

import numpy as np

from ..building.stations import BuildPlan, Corridor, TOOL_DOWN, compile_primitives, grip_pose, plan_stations
from ..building.wall import ParametricWall, adapt_wall_to_site, generate_wall
from ..control.models import base_drive_problem, base_reference, whole_body_hold_problem
from ..control.mpc import MPCController
from ..control.problem import SLQSettings
from ..errors import ConfigurationError, FabsimError
from ..geometry import Pose2, Pose3, se3_exp
from ..kinematics import joint_frames, load_robot_model, solve_ik
from ..localization.cad import align_cad
from ..localization.estimates import PointCloud
from ..localization.icp import register_icp
from ..localization.tags import TagMap, localize_from_tags
from ..localization.wires import Frustum, observe_wires
from ..mesh.design import DeflectionModel, MeshDesign, generate_mesh
from ..mesh.feedback import compensate_next_layer, contour_truth, measure_contour, weld_layer, write_contour_csv
from .metrics import RunMetrics, config_hash
from .noise import noise_from
from .scan import scan_world
from .site import lab_boxes, lab_tags, pillar_boxes, pillar_features
from .world import WorldModel, integrate_unicycle, step, tag_observations

DT = 0.01
SCANNER = Pose3((0.0, 0.0, 1.6))  # range scanner mount in the base frame
TAG_CAMERA = Pose3.from_rt(np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]), (0.0, 0.0, 1.2))

DEFAULTS = {
    "brickwall": {
        "scenario": "brickwall",
        "robot_model": None,
        "plan": None,
        "noise": "nominal",
        "seed": 0,
        "output_dir": "out",
        "mode": "full",
        "wall": {},
        "corridor": {},
        "start": [3.25, -3.0, 0.0],
        "site": {"pillar_offsets": {}, "clutter": True},
        "scan": {"resolution": 0.006, "station_points": 4000},
        "drive": {"speed": 0.8, "yaw_rate": 0.6, "horizon": 50, "iterations": 1},
    },
    "mesh": {
        "scenario": "mesh",
        "robot_model": None,
        "noise": "nominal",
        "seed": 0,
        "output_dir": "out",
        "kappa": 1.0,
        "mesh": {},
        "deflection": {"gain": 0.002, "sigma": 0.0002, "inherit": 1.0},
        "base": [0.5, -2.5, math.pi / 2],
        "camera_standoff": 0.9,
    },
    "ee_hold": {
        "scenario": "ee_hold",
        "robot_model": None,
        "noise": "nominal",
        "seed": 0,
        "output_dir": "out",
        "q0": [0.0, 0.35, 0.1, 0.0, 1.0, 0.0],
        "move": [1.0, 0.0, math.pi / 2],
        "drive_time": 4.0,
        "turn_time": 4.0,
        "settle_time": 1.0,
        "horizon": 100,
        "iterations": 1,
    },
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigurationError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("wall", "corridor", "mesh", "pillar_offsets"):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(config):
    """Fill defaults for the named scenario; unknown keys are rejected."""
    if not isinstance(config, dict):
        raise ConfigurationError("scenario config must be a JSON object")
    name = config.get("scenario")
    if name not in DEFAULTS:
        raise ConfigurationError(f"unknown scenario {name!r}; choose from {sorted(DEFAULTS)}")
    cfg = _merge(DEFAULTS[name], config)
    noise_from(cfg["noise"])
    if cfg.get("mode", "full") not in ("full", "localization"):
        raise ConfigurationError(f"unknown mode {cfg['mode']!r}; choose 'full' or 'localization'")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    return cfg


def _model(cfg):
    return load_robot_model(cfg.get("robot_model"))


# ---------------------------------------------------------------------------
# planning, cached per process


@lru_cache(maxsize=8)
def _cached_plan(wall_json, corridor_json, model_path):
    model = load_robot_model(model_path)
    wall = ParametricWall.from_dict(json.loads(wall_json))
    tasks = generate_wall(wall)
    plan = plan_stations(tasks, model, Corridor(**json.loads(corridor_json)), wall=wall)
    compile_primitives(plan, tasks, model, wall=wall)
    return wall, tasks, plan


def plan_for(cfg):
    """(wall, tasks, plan) for a brick-wall config, loading ``cfg['plan']`` when given."""
    wall_doc = ParametricWall.from_dict(cfg["wall"]).to_dict()
    if cfg.get("plan"):
        wall = ParametricWall.from_dict(wall_doc)
        return wall, generate_wall(wall), BuildPlan.load(cfg["plan"])
    return _cached_plan(json.dumps(wall_doc, sort_keys=True), json.dumps(cfg["corridor"], sort_keys=True), cfg.get("robot_model"))


# ---------------------------------------------------------------------------
# driving


def drive_to(world, est: Pose2, goal: Pose2, drive_cfg, stats):
    """Drive under base-only MPC on the dead-reckoned estimate; returns the new estimate.

    The true base moves with slip, the estimate integrates the commands.
    """
    dist = math.hypot(goal.x - est.x, goal.y - est.y)
    turn = abs(Pose2(0, 0, math.atan2(goal.y - est.y, goal.x - est.x) - est.theta).theta) if dist > 1e-9 else 0.0
    turn = max(turn, abs(Pose2(0, 0, goal.theta - est.theta).theta))
    drive_time = max(1.0, dist / drive_cfg["speed"])
    turn_time = max(1.0, min(turn, math.pi / 2) / drive_cfg["yaw_rate"] * 2)
    ref = base_reference(est, goal, drive_time, turn_time, DT, settle_time=0.5)
    total = ref.shape[0] - 1
    H = drive_cfg["horizon"]
    settings = SLQSettings()

    def factory(t, x):
        return base_drive_problem(x, ref, DT, horizon=min(H, max(total - t, 1)), start=t, settings=settings)

    ctl = MPCController(factory, iterations=drive_cfg["iterations"])
    x = est.as_array()
    for _ in range(total):
        u = ctl.step(x)
        v, w = float(u[0]), float(u[2])
        step(world, (v, w), DT)
        x = integrate_unicycle(x, v, w, DT)
    stats.extend(ctl.stats.latencies)
    return Pose2(*x)


# ---------------------------------------------------------------------------
# brick wall


def _brick_world(cfg, wall, model, seed):
    noise = noise_from(cfg["noise"])
    site = cfg["site"]
    boxes = lab_boxes(clutter=site.get("clutter", True)) + pillar_boxes(wall, site.get("pillar_offsets"))
    w = WorldModel(model, cfg["start"], model.home(), noise, seed, boxes=boxes, tags=lab_tags())
    return w


def _scan(world, n_points=None):
    """Scan from the true base; returns points in the base frame."""
    nz = world.noise
    rng = world.rngs["scan"]
    sensor = world.base_pose.to_pose3() @ SCANNER
    cloud = scan_world(world, sensor, world._scan_resolution, sigma=nz.scan_sigma, rng=rng)
    P = SCANNER.transform_points(cloud.points)
    if n_points is not None and len(P) > n_points:
        P = P[np.sort(rng.choice(len(P), n_points, replace=False))]
    return PointCloud(P, "base")


def run_brickwall(cfg, metrics: RunMetrics):
    model = _model(cfg)
    wall, tasks, plan = plan_for(cfg)
    world = _brick_world(cfg, wall, model, cfg["seed"])
    world._scan_resolution = cfg["scan"]["resolution"]
    metrics.events = world.events
    noise = world.noise
    by_id = {t.brick_id: t for t in tasks}
    metrics.counts.update(bricks_planned=len(plan.order), stations=len(plan.stations), passes=plan.passes, bricks_placed=0)
    latencies = []

    T_WM = world.base_pose.to_pose3()
    # start-up: reference scan and tag survey, both in the map frame
    ref_scan = _scan(world)
    world.log("reference_scan", points=len(ref_scan.points))
    survey = {o.tag_id: TAG_CAMERA @ o.pose for o in tag_observations(world, TAG_CAMERA, hfov=2 * math.pi)}
    tag_map = TagMap(survey, 0.16, True)

    # CAD alignment against the reference scan, starting from a rough prior
    srng = world.rngs["site"]
    err = se3_exp(np.r_[0.0, 0.0, noise.cad_prior_r * srng.standard_normal(), noise.cad_prior_t * srng.standard_normal(2), 0.0])
    prior = (T_WM @ err).inverse()  # CAD -> map
    align = align_cad(ref_scan, pillar_features(wall, prior), datum="pillar_start")
    if align.failures:
        world.log("cad_feature_failed", features=[n for n, _ in align.failures])
    T_MC = align.pose.inverse()
    est_tasks, _ = adapt_wall_to_site(tasks, align, wall)
    est_by_id = {t.brick_id: t for t in est_tasks}
    offs = {k: np.asarray(v, dtype=float) for k, v in cfg["site"].get("pillar_offsets", {}).items()}
    truth = {n: offs.get(n, np.zeros(3)) for n in ("pillar_start", "pillar_end")}
    true_tasks, _ = adapt_wall_to_site(tasks, truth, wall)
    true_by_id = {t.brick_id: t for t in true_tasks}
    world.log(
        "cad_aligned",
        deviation_mm={k: [round(float(x) * 1e3, 6) for x in v] for k, v in sorted(align.deviations.items())},
    )

    H = wall.brick[2]
    grip_in_brick_inv = Pose3.from_rt(TOOL_DOWN, (0.0, 0.0, 0.5 * H)).inverse()
    placing = cfg["mode"] == "full"
    est = Pose2()
    prng = world.rngs["placement"]
    for k, (station, ids) in enumerate(zip(plan.stations, plan.assignments)):
        goal = Pose2.from_pose3(T_MC @ station.to_pose3())
        est = drive_to(world, est, goal, cfg["drive"], latencies)
        # coarse fix from tags, refined by ICP against the reference scan
        fix = localize_from_tags(tag_map, tag_observations(world, TAG_CAMERA, hfov=2 * math.pi), TAG_CAMERA)
        scan = _scan(world, cfg["scan"]["station_points"])
        reg = register_icp(scan, ref_scan, fix.pose)
        est = Pose2.from_pose3(reg.pose)
        true_base = world.base_pose
        # error of the base pose the builder uses, i.e. in the CAD frame; it
        # includes the alignment error shared by every station
        e = true_base.to_pose3().inverse() @ T_MC.inverse() @ reg.pose
        metrics.add("station_error_mm", np.linalg.norm(e.translation) * 1e3)
        metrics.add("station_error_mrad", np.linalg.norm(e.rotvec()) * 1e3)
        e = (T_WM.inverse() @ true_base.to_pose3()).inverse() @ reg.pose
        metrics.add("scan_match_error_mm", np.linalg.norm(e.translation) * 1e3)
        world.log("station", index=k, icp_iterations=int(reg.iterations), bricks=len(ids))
        if not placing:
            continue
        b_est = est.as_array()
        b_true = true_base.as_array()
        for bid in ids:
            target = T_MC @ grip_pose(est_by_id[bid], H)
            q = solve_ik(model, b_est, target, (plan.solutions[bid],))
            tool = Pose3.from_matrix(joint_frames(model, b_true[None], q[None])[0, -1])
            placed = tool @ grip_in_brick_inv
            p = placed.translation
            if noise.placement_sigma:
                p = p + prng.normal(0.0, noise.placement_sigma, 3)
            world.bricks[bid] = Pose3(p, placed.quaternion)
            world.q = q
            metrics.add("placement_error_mm", np.linalg.norm(p - true_by_id[bid].pose.translation) * 1e3)
        metrics.counts["bricks_placed"] = len(world.bricks)
    metrics.latency = _latency(latencies)


def _latency(lat):
    lat = np.asarray(lat, dtype=float) * 1e3
    if lat.size == 0:
        return {}
    return {"n": int(lat.size), "median": float(np.median(lat)), "p99": float(np.percentile(lat, 99)), "max": float(lat.max())}


# ---------------------------------------------------------------------------
# mesh


def _look_at(eye, target, up=(0.0, 0.0, 1.0)):
    z = np.asarray(target, float) - np.asarray(eye, float)
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose3.from_rt(np.column_stack([x, y, z]), eye)


EE_CAMERA = Pose3((0.0, 0.0, 0.05))  # camera at the flange, optical axis along tool z


def run_mesh(cfg, metrics: RunMetrics):
    model = _model(cfg)
    design = generate_mesh(**cfg["mesh"])
    deflection = DeflectionModel(**cfg["deflection"])
    noise = noise_from(cfg["noise"])
    world = WorldModel(model, cfg["base"], model.home(), noise, cfg["seed"], tags=lab_tags())
    metrics.events = world.events
    world.mesh[0] = design.layers[0].copy()
    kappa = float(cfg["kappa"])
    base_cam = Pose3.from_rt(TAG_CAMERA.rotation, (0.3, 0.0, 1.2))
    centre = np.mean(design.layers[0].reshape(-1, 3), axis=0)
    n_avg = np.mean(design.normals[0], axis=0)
    n_avg /= np.linalg.norm(n_avg)
    q = model.home()
    contour = None
    for layer in range(1, design.n_layers):
        planned = design.layers[layer] if contour is None else compensate_next_layer(design, contour, kappa)
        weld_layer(world, planned, layer, deflection, world.rngs["deflection"], design)
        truth = contour_truth(world, design, layer)
        metrics.add("contour_max_mm", np.max(np.abs(truth)) * 1e3)
        metrics.add("contour_rms_mm", np.sqrt(np.mean(truth**2)) * 1e3)
        # base from tags, camera pose through the arm kinematics
        fix = localize_from_tags(world.tags, tag_observations(world, base_cam, hfov=2 * math.pi), base_cam)
        b_est = Pose2.from_pose3(fix.pose).as_array()
        z = centre[2] + layer * design.pitch
        look = np.array([centre[0], centre[1], z])
        eye = look - cfg["camera_standoff"] * np.array([n_avg[0], n_avg[1], 0.0]) + np.array([0.0, 0.0, 0.3])
        cam_target = _look_at(eye, look)
        tool_target = cam_target @ EE_CAMERA.inverse()
        q = solve_ik(model, b_est, tool_target, (q,))
        world.q = q
        cam_true = Pose3.from_matrix(joint_frames(model, world.base[None], q[None])[0, -1]) @ EE_CAMERA
        cam_est = Pose3.from_matrix(joint_frames(model, b_est[None], q[None])[0, -1]) @ EE_CAMERA
        obs = observe_wires(world, cam_true, noise.wire_sigma, rng=world.rngs["wires"], frustum=Frustum(), return_ids=True)
        contour = measure_contour(obs, cam_est, design, layer)
        world.log("layer", index=layer, observed=int(len(obs[0])), measured_max_mm=round(contour.max * 1e3, 9))
    metrics.counts.update(layers=design.n_layers)
    rows = [(i + 1, m * 1e-3, r * 1e-3) for i, (m, r) in enumerate(zip(metrics.series["contour_max_mm"], metrics.series["contour_rms_mm"]))]
    as_built = MeshDesign([world.mesh[i] for i in sorted(world.mesh)], design.normals[: len(world.mesh)], design.pitch)
    metrics.artifacts["contour.csv"] = lambda path: write_contour_csv(rows, path)
    metrics.artifacts["as_built.json"] = as_built.save


# ---------------------------------------------------------------------------
# end-effector hold


def run_ee_hold(cfg, metrics: RunMetrics):
    model = _model(cfg)
    noise = noise_from(cfg["noise"])
    q0 = np.asarray(cfg["q0"], dtype=float)
    world = WorldModel(model, (0.0, 0.0, 0.0), q0, noise, cfg["seed"])
    metrics.events = world.events
    p_star = joint_frames(model, world.base[None], q0[None])[0, -1, :3, 3].copy()
    goal = Pose2(*cfg["move"])
    ref = base_reference(Pose2(), goal, cfg["drive_time"], cfg["turn_time"], DT, cfg["settle_time"])
    total = ref.shape[0] - 1
    H = cfg["horizon"]
    settings = SLQSettings()

    def factory(t, x):
        return whole_body_hold_problem(model, x, p_star, ref, DT, horizon=min(H, max(total - t, 1)), start=t, settings=settings)

    ctl = MPCController(factory, iterations=cfg["iterations"])
    dev = []
    for _ in range(total):
        u = ctl.step(world.state_vector())
        step(world, np.r_[u[0], u[2], u[3:]], DT)
        p = joint_frames(model, world.base[None], world.q[None])[0, -1, :3, 3]
        dev.append(np.linalg.norm(p - p_star) * 1e3)
    metrics.series["hold_deviation_mm"] = dev
    final = world.base_pose
    metrics.counts.update(steps=total, degraded_steps=len(ctl.stats.degraded_steps))
    world.log("final_base", x=round(final.x, 9), y=round(final.y, 9), theta=round(final.theta, 9))
    metrics.latency = _latency(ctl.stats.latencies)


RUNNERS = {"brickwall": run_brickwall, "mesh": run_mesh, "ee_hold": run_ee_hold}


def execute_scenario(config, *, write=True) -> RunMetrics:
    """Run one scenario; sub-errors abort the run with partial metrics and the cause."""
    cfg = resolve_config(config)
    metrics = RunMetrics(cfg["scenario"], cfg["seed"], config_hash(cfg))
    try:
        RUNNERS[cfg["scenario"]](cfg, metrics)
    except FabsimError as exc:
        metrics.status = "aborted"
        metrics.cause = f"{type(exc).__name__}: {exc}"
        metrics.events.append({"kind": "abort", "cause": metrics.cause})
    if write:
        metrics.write(cfg["output_dir"])
    return metrics


def load_config(path):
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
