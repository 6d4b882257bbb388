"""Ray-cast range scanner over oriented boxes."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose3
from ..localization.estimates import PointCloud

LATTICE = 0.05
JITTER = 0.4  # fraction of a cell


@dataclass(frozen=True)
class Box:
    """Oriented box: ``pose`` is the centre, ``half`` the half extents."""

    name: str
    pose: Pose3
    half: tuple

    def surface_points(self, spacing=LATTICE):
        """Fixed surface samples (world frame), about one per ``spacing`` square.

        Each face is split into cells of roughly ``spacing`` and one point is
        placed per cell with a jitter drawn from a generator seeded by the
        box name, so the samples are a property of the box: every scan and
        every model of the same box share them, and they carry no periodic
        structure that a registration could slip along.
        """
        h = np.asarray(self.half, dtype=float)
        rng = np.random.default_rng(zlib.crc32(self.name.encode()))
        pts = []
        for ax in range(3):
            u, v = [a for a in range(3) if a != ax]
            gu, cu = _cells(h[u], spacing)
            gv, cv = _cells(h[v], spacing)
            U, V = np.meshgrid(gu, gv, indexing="ij")
            for sign in (-1.0, 1.0):
                P = np.zeros((U.size, 3))
                P[:, ax] = sign * h[ax]
                P[:, u] = U.ravel() + cu * rng.uniform(-JITTER, JITTER, U.size)
                P[:, v] = V.ravel() + cv * rng.uniform(-JITTER, JITTER, U.size)
                pts.append(P)
        return self.pose.transform_points(np.vstack(pts))


def _cells(half, spacing):
    """Cell centres and cell size covering ``[-half, half]``."""
    n = max(1, int(round(2 * half / spacing)))
    c = 2 * half / n
    return -half + c * (np.arange(n) + 0.5), c


def _entry_distance(boxes, o, dirs, max_t):
    """Distance along each unit ray to the first box surface it enters (inf if none)."""
    best = np.full(len(dirs), np.inf)
    for box in boxes:
        R = box.pose.rotation
        h = np.asarray(box.half, dtype=float)
        o_l = R.T @ (o - box.pose.translation)
        d_l = dirs @ R
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d_l
            t1 = (-h - o_l) * inv
            t2 = (h - o_l) * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (tmax >= tmin) & (tmin > 1e-9) & (tmin <= max_t)
        best[hit] = np.minimum(best[hit], tmin[hit])
    return best


def scan_world(world, sensor_pose: Pose3, resolution, *, sigma=0.0, rng=None, max_range=15.0, spacing=LATTICE, elevation=(-0.6, 0.4)):
    """Scan the boxes of ``world`` (or a list of boxes) from ``sensor_pose``.

    Box surfaces carry fixed samples about ``spacing`` apart (see
    :meth:`Box.surface_points`).  A sample is returned when a ray from the
    sensor reaches it unoccluded, it lies in the ``elevation`` band (radians,
    sensor frame) and the beam footprint ``range * resolution`` is no wider
    than the sample spacing.  Scans of a
    static scene from different poses therefore share the surface they both
    see point for point.  Points are perturbed by Gaussian range noise along
    the ray.  Returns a cloud in the sensor frame.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    boxes = getattr(world, "boxes", world)
    o = sensor_pose.translation
    reach = min(max_range, spacing / resolution)
    pts = []
    for box in boxes:
        P = box.surface_points(spacing)
        d = P - o
        r = np.linalg.norm(d, axis=1)
        el = np.arcsin(np.clip((d @ sensor_pose.rotation[:, 2]) / np.maximum(r, 1e-12), -1.0, 1.0))
        sel = (r > 1e-9) & (r <= reach) & (el >= elevation[0]) & (el <= elevation[1])
        pts.append(P[sel])
    P = np.vstack(pts) if pts else np.zeros((0, 3))
    if len(P):
        r = np.linalg.norm(P - o, axis=1)
        t = _entry_distance(boxes, o, (P - o) / r[:, None], reach + 1e-6)
        P = P[t >= r - 1e-9]
    if not len(P):
        return PointCloud(np.zeros((0, 3)), "sensor")
    if sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        d = P - o
        rng_n = rng.normal(0.0, sigma, len(P))
        P = P + (d / np.linalg.norm(d, axis=1, keepdims=True)) * rng_n[:, None]
    return PointCloud(sensor_pose.inverse().transform_points(P), "sensor")
