"""Parametric double-leaf brick wall with a sinusoidal centreline and running bond."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigurationError, InfeasibleAdaptationError
from ..geometry import Pose3


@dataclass
class ParametricWall:
    length: float = 6.5
    height: float = 2.0
    leaf_offset: float = 0.3
    amplitude: float = 0.1  # of the centreline undulation, metres
    frequency: float = 1.0 / 3.25  # spatial frequency, 1/m
    phase: float = 0.0
    brick: tuple = (0.25, 0.125, 0.0625)
    head_joint: float = 0.01  # nominal gap between bricks in a course
    bed_joint: float = 0.0005  # vertical gap between courses
    bond_offset: float = 0.5  # fraction of a brick pitch between consecutive courses
    pillar_size: tuple = (0.3, 0.3, 2.4)
    pillar_gap: float = 0.15  # between a wall end and its pillar face

    def validate(self):
        if min(self.length, self.height, self.leaf_offset, *self.brick) <= 0:
            raise ConfigurationError("wall dimensions must be positive")
        if self.amplitude < 0 or self.amplitude >= self.leaf_offset / 2:
            raise ConfigurationError("undulation amplitude must be in [0, leaf_offset / 2)")
        if self.head_joint < 0 or self.bed_joint < 0:
            raise ConfigurationError("joint gaps must be >= 0")

    @property
    def pitch(self):
        return self.brick[0] + self.head_joint

    @property
    def course_height(self):
        return self.brick[2] + self.bed_joint

    @property
    def courses(self):
        return int(round(self.height / self.course_height))

    @property
    def per_course(self):
        return int(math.floor(self.length / self.pitch + 1e-9))

    def centreline(self, x):
        k = 2.0 * math.pi * self.frequency
        return self.amplitude * np.sin(k * np.asarray(x) + self.phase)

    def slope(self, x):
        k = 2.0 * math.pi * self.frequency
        return self.amplitude * k * np.cos(k * np.asarray(x) + self.phase)

    def pillars(self):
        """Design poses (box centres) of the two anchor pillars, keyed by name."""
        px, py, pz = self.pillar_size
        yc = 0.5 * self.leaf_offset
        out = {}
        for name, x_end, sign in (("pillar_start", 0.0, -1.0), ("pillar_end", self.length, 1.0)):
            y = float(self.centreline(x_end)) + yc
            out[name] = Pose3((x_end + sign * (self.pillar_gap + 0.5 * px), y, 0.5 * pz))
        return out

    def to_dict(self):
        d = asdict(self)
        d["brick"] = list(self.brick)
        d["pillar_size"] = list(self.pillar_size)
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        for k in ("brick", "pillar_size"):
            if k in doc:
                doc[k] = tuple(doc[k])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown wall parameters: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class BrickTask:
    brick_id: int
    pose: Pose3  # brick centre in the CAD frame
    course: int
    leaf: int
    s: float = 0.0  # arc-length position along the leaf curve
    supports: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "brick_id": self.brick_id,
            "pose": self.pose.to_dict(),
            "course": self.course,
            "leaf": self.leaf,
            "s": self.s,
            "supports": list(self.supports),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["brick_id"], Pose3.from_dict(d["pose"]), d["course"], d["leaf"], d["s"], tuple(d["supports"]))


class _ArcTable:
    """Arc length along ``y = c(x) + offset`` and its inverse, tabulated on a fine grid."""

    def __init__(self, wall, n=20001):
        self.x = np.linspace(0.0, wall.length, n)
        ds = np.sqrt(1.0 + wall.slope(self.x) ** 2)
        self.s = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]) * np.diff(self.x))])

    @property
    def total(self):
        return float(self.s[-1])

    def x_at(self, s):
        return np.interp(s, self.s, self.x)


def generate_wall(params: ParametricWall = None, *, check=True):
    """Brick tasks in build order: course by course, leaf 0 then leaf 1, along the wall.

    Bricks in a course are spaced evenly in arc length; consecutive courses
    are shifted by ``bond_offset`` of a pitch (half each way from the
    nominal position).  Supports are the bricks of the course below, same
    leaf, whose extent along the curve overlaps.
    """
    w = params or ParametricWall()
    w.validate()
    table = _ArcTable(w)
    n = w.per_course
    spacing = table.total / n
    L, W, H = w.brick
    tasks = []
    prev_ids = {}
    for c in range(w.courses):
        z = c * w.course_height + 0.5 * H
        shift = (0.25 if c % 2 else -0.25) * w.bond_offset * 2.0 * spacing
        cur = {}
        for leaf in (0, 1):
            s = (np.arange(n) + 0.5) * spacing + shift
            x = table.x_at(np.clip(s, 0.0, table.total))
            # extrapolate linearly past the wall ends
            x = np.where(s < 0, s, x)
            x = np.where(s > table.total, w.length + (s - table.total), x)
            y = w.centreline(x) + leaf * w.leaf_offset
            yaw = np.arctan2(w.slope(x), 1.0)
            ids = []
            for i in range(n):
                sup = ()
                if c > 0:
                    sup = tuple(j for j, sj in prev_ids[leaf] if abs(sj - s[i]) < L)
                bid = len(tasks)
                tasks.append(
                    BrickTask(bid, Pose3.from_xyz_rpy((x[i], y[i], z), (0.0, 0.0, yaw[i])), c, leaf, float(s[i]), sup)
                )
                ids.append((bid, float(s[i])))
            cur[leaf] = ids
        prev_ids = cur
    if check:
        pair = first_overlap(tasks, w.brick)
        if pair is not None:
            raise ConfigurationError(f"bricks {pair[0]} and {pair[1]} overlap")
    return tasks


def _footprints(tasks, dims):
    """Plan-view corners (n, 4, 2) of each brick."""
    L, W, _ = dims
    local = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]]) * [L, W]
    out = np.empty((len(tasks), 4, 2))
    for i, t in enumerate(tasks):
        R = t.pose.rotation[:2, :2]
        out[i] = local @ R.T + t.pose.translation[:2]
    return out


def rect_overlap(a, b):
    """Separating-axis test for two convex quadrilaterals (4, 2); True if interiors intersect."""
    for poly in (a, b):
        for k in range(4):
            e = poly[(k + 1) % 4] - poly[k]
            nrm = np.array([-e[1], e[0]])
            pa, pb = a @ nrm, b @ nrm
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


def first_overlap(tasks, dims):
    """First pair of bricks in the same course whose footprints intersect, or None."""
    fp = _footprints(tasks, dims)
    centers = fp.mean(axis=1)
    radius = 0.5 * math.hypot(dims[0], dims[1])
    courses = np.array([t.course for t in tasks])
    for c in np.unique(courses):
        idx = np.flatnonzero(courses == c)
        d = np.linalg.norm(centers[idx, None] - centers[None, idx], axis=-1)
        ii, jj = np.nonzero(np.triu(d < 2 * radius, 1))
        for a, b in zip(idx[ii], idx[jj]):
            if rect_overlap(fp[a], fp[b]):
                return int(a), int(b)
    return None


def anchor_deviation(alignment, names=("pillar_start", "pillar_end")):
    """Along-wall deviations (CAD x) of the two anchors from a CAD alignment result."""
    dev = getattr(alignment, "deviations", alignment)
    return float(np.asarray(dev[names[0]])[0]), float(np.asarray(dev[names[1]])[0])


def adapt_wall_to_site(tasks, alignment, wall: ParametricWall = None, *, max_stretch=0.02):
    """Stretch the wall along its axis so the end bricks follow the measured anchors.

    ``alignment`` supplies per-anchor deviations in the CAD frame (a
    :class:`CadAlignment` or a mapping ``name -> 3-vector``).  A brick at
    along-wall position x moves by ``d0 + (d1 - d0) * x / length``.
    Returns ``(adjusted_tasks, max_shift)``.
    """
    w = wall or ParametricWall()
    d0, d1 = anchor_deviation(alignment)
    if abs(d1 - d0) > max_stretch * w.length:
        raise InfeasibleAdaptationError(
            f"required stretch {abs(d1 - d0) * 1e3:.1f} mm exceeds {max_stretch:.0%} of the wall length"
        )
    out = []
    max_shift = 0.0
    for t in tasks:
        x = t.pose.translation[0]
        dx = d0 + (d1 - d0) * x / w.length
        max_shift = max(max_shift, abs(dx))
        out.append(
            BrickTask(t.brick_id, Pose3(t.pose.translation + (dx, 0.0, 0.0), t.pose.quaternion), t.course, t.leaf, t.s, t.supports)
        )
    return out, max_shift


def save_wall(params, path):
    with open(path, "w") as fh:
        json.dump(params.to_dict(), fh, indent=2)


def load_wall(path):
    with open(path) as fh:
        return ParametricWall.from_dict(json.load(fh))
