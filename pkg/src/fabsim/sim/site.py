"""Synthetic laboratory sites: boxes for the scanner, anchor features, tag maps."""
from __future__ import annotations

import math

import numpy as np

from ..building.wall import ParametricWall
from ..geometry import Pose3
from ..localization.cad import CadFeature
from ..localization.tags import TagMap
from .scan import LATTICE, Box

LAB = (-5.0, 11.5, -7.0, 5.0)  # x_min, x_max, y_min, y_max of the hall interior
LAB_HEIGHT = 3.0


def lab_boxes(lab=LAB, height=LAB_HEIGHT, clutter=True):
    """Floor, four hall walls and a few cabinets and columns."""
    x0, x1, y0, y1 = lab
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    th = 0.1
    out = [
        Box("floor", Pose3((cx, cy, -0.05)), (hx + 2 * th, hy + 2 * th, 0.05)),
        Box("wall_west", Pose3((x0 - th, cy, 0.5 * height)), (th, hy, 0.5 * height)),
        Box("wall_east", Pose3((x1 + th, cy, 0.5 * height)), (th, hy, 0.5 * height)),
        Box("wall_south", Pose3((cx, y0 - th, 0.5 * height)), (hx, th, 0.5 * height)),
        Box("wall_north", Pose3((cx, y1 + th, 0.5 * height)), (hx, th, 0.5 * height)),
    ]
    if clutter:
        out += [
            Box("cabinet_a", Pose3((-3.5, -5.5, 0.9)), (0.4, 0.3, 0.9)),
            Box("cabinet_b", Pose3((9.0, -6.0, 0.6)), (0.6, 0.4, 0.6)),
            Box("column_a", Pose3((2.0, 3.5, 1.5)), (0.2, 0.2, 1.5)),
            Box("column_b", Pose3.from_rt(_rz(0.4), (7.5, -4.5, 1.5)), (0.25, 0.25, 1.5)),
            Box("crate", Pose3.from_rt(_rz(-0.3), (-2.0, 2.5, 0.4)), (0.5, 0.35, 0.4)),
        ]
    return out


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pillar_boxes(wall: ParametricWall, offsets=None):
    """As-built pillars: design poses displaced by ``offsets`` (name -> xyz)."""
    offsets = offsets or {}
    half = tuple(0.5 * v for v in wall.pillar_size)
    out = []
    for name, pose in wall.pillars().items():
        d = np.asarray(offsets.get(name, (0.0, 0.0, 0.0)), dtype=float)
        out.append(Box(name, Pose3(pose.translation + d, pose.quaternion), half))
    return out


def pillar_features(wall: ParametricWall, prior: Pose3, spacing=LATTICE):
    """CAD features of the design pillars, with ``prior`` the CAD -> scan frame guess."""
    return [CadFeature(b.name, b.surface_points(spacing), prior) for b in pillar_boxes(wall)]


def lab_tags(lab=LAB, height=1.5, every=2.0):
    """Tags on the hall walls facing inwards (tag z axis into the hall)."""
    x0, x1, y0, y1 = lab
    tags = {}
    tid = 0
    # rotation columns: tag x, y (up), z (normal into the room)
    faces = (
        (np.array([0.0, 1.0, 0.0]), x0, None),
        (np.array([0.0, -1.0, 0.0]), x1, None),
        (np.array([-1.0, 0.0, 0.0]), None, y0),
        (np.array([1.0, 0.0, 0.0]), None, y1),
    )
    for tx, fx, fy in faces:
        normal = np.cross(tx, [0.0, 0.0, 1.0])
        R = np.column_stack([tx, [0.0, 0.0, 1.0], -normal])
        if np.linalg.det(R) < 0:
            R[:, 2] *= -1
        span = np.arange(y0 + 1.0, y1, every) if fx is not None else np.arange(x0 + 1.0, x1, every)
        for v in span:
            p = (fx, v, height) if fx is not None else (v, fy, height)
            tags[tid] = Pose3.from_rt(R, p)
            tid += 1
    return TagMap(tags, 0.16, True)
