"""Ground-truth world state and the plant model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..geometry import Pose2, Pose3, wrap_angle
from .noise import NoiseConfig, channel_rngs


def integrate_unicycle(pose, v, omega, dt):
    """Exact pose after driving with constant ``(v, omega)`` for ``dt``; ``pose`` is (x, y, theta)."""
    x, y, th = pose
    if abs(omega) < 1e-12:
        return np.array([x + v * math.cos(th) * dt, y + v * math.sin(th) * dt, th])
    th2 = th + omega * dt
    r = v / omega
    return np.array([x + r * (math.sin(th2) - math.sin(th)), y - r * (math.cos(th2) - math.cos(th)), float(wrap_angle(th2))])


@dataclass
class WorldModel:
    model: object
    base: np.ndarray
    q: np.ndarray
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    boxes: list = field(default_factory=list)
    tags: object = None
    bricks: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    obstacles: object = None
    events: list = field(default_factory=list)
    time: float = 0.0

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float).copy()
        self.q = np.asarray(self.q, dtype=float).copy()
        self.rngs = channel_rngs(self.seed)

    @property
    def base_pose(self) -> Pose2:
        return Pose2(*self.base)

    @property
    def wires(self):
        return [(s[0], s[1], layer) for layer in sorted(self.mesh) for s in self.mesh[layer]]

    def state_vector(self):
        return np.concatenate([self.base, self.q])

    def log(self, kind, **data):
        self.events.append({"t": round(self.time, 9), "kind": kind, **data})


def step(world: WorldModel, control, dt):
    """Advance the true robot by ``dt`` under ``control = (v, omega, qdot...)``.

    The base follows the unicycle model with fractional speed bias and
    Gaussian speed noise (only while commanded to move); joint velocities are
    clipped to the speed limits and joint angles clamped to the limits, with
    an event logged for every clamp.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    control = np.asarray(control, dtype=float)
    v, w = float(control[0]), float(control[1])
    qd = control[2:]
    nz = world.noise
    if v != 0.0 or w != 0.0:
        rng = world.rngs["slip"]
        v = v * (1.0 + nz.slip_bias_v) + (nz.slip_sigma_v * rng.standard_normal() if nz.slip_sigma_v else 0.0)
        w = w * (1.0 + nz.slip_bias_w) + (nz.slip_sigma_w * rng.standard_normal() if nz.slip_sigma_w else 0.0)
        world.base = integrate_unicycle(world.base, v, w, dt)
    if qd.size:
        m = world.model
        vmax = np.asarray(m.max_joint_speed, dtype=float)
        qd = np.clip(qd, -vmax, vmax)
        q = world.q + qd * dt
        lo, hi = m.joint_limits[:, 0], m.joint_limits[:, 1]
        hit = (q < lo) | (q > hi)
        if np.any(hit):
            for j in np.flatnonzero(hit):
                world.log("joint_limit", joint=int(j) + 1, value=float(q[j]))
            q = np.clip(q, lo, hi)
        world.q = q
    world.time += dt
    return world


def tag_observations(world, camera_in_robot: Pose3, *, hfov=math.radians(90), max_range=8.0):
    """Noisy relative poses of every mapped tag in view of a base-mounted camera.

    A tag is visible within ``max_range`` and ``hfov / 2`` of the optical
    axis; ``hfov = 2 pi`` models an all-round camera rig.
    """
    from ..localization.tags import TagObservation
    from ..geometry import so3_exp

    nz = world.noise
    rng = world.rngs["tags"]
    T_wc = world.base_pose.to_pose3() @ camera_in_robot
    out = []
    for tid, T_wt in sorted(world.tags.tags.items()):
        rel = T_wc.inverse() @ T_wt
        p = rel.translation
        r = np.linalg.norm(p)
        if r < 0.1 or r > max_range or math.acos(np.clip(p[2] / r, -1.0, 1.0)) > 0.5 * hfov:
            continue
        dt_ = rng.normal(0.0, nz.tag_sigma_t, 3) if nz.tag_sigma_t else np.zeros(3)
        dr = rng.normal(0.0, nz.tag_sigma_r, 3) if nz.tag_sigma_r else np.zeros(3)
        noisy = Pose3.from_rt(rel.rotation @ so3_exp(dr), p + dt_)
        out.append(TagObservation(tid, noisy, max(nz.tag_sigma_t, 1e-4), max(nz.tag_sigma_r, 1e-4)))
    return out
