"""Simulated wire detection from the end-effector camera."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose3


@dataclass(frozen=True)
class Frustum:
    hfov: float = math.radians(70.0)
    vfov: float = math.radians(55.0)
    near: float = 0.05
    far: float = 1.5

    def contains(self, P):
        """Mask of camera-frame points inside the frustum (optical axis +z)."""
        z = P[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (z > self.near) & (z < self.far)
            ok &= np.abs(P[..., 0]) <= np.tan(0.5 * self.hfov) * z
            ok &= np.abs(P[..., 1]) <= np.tan(0.5 * self.vfov) * z
        return ok


def observe_wires(world, ee_camera_pose: Pose3, sigma=0.0, *, rng=None, seed=None, frustum=Frustum(), return_ids=False):
    """Endpoints (camera frame) of visible wires of the most recent layer.

    ``world`` is a sequence of ``(p0, p1, layer)`` world-frame segments or an
    object with a ``wires`` attribute holding such a sequence.  A wire is
    visible when both endpoints lie inside the frustum.  Returns a list of
    (2, 3) arrays with additive Gaussian noise of standard deviation ``sigma``;
    with ``return_ids`` the indices of the visible wires within their layer
    are returned first.
    """
    wires = getattr(world, "wires", world)
    if len(wires) == 0:
        return ([], []) if return_ids else []
    last = max(w[2] for w in wires)
    seg = np.array([[w[0], w[1]] for w in wires if w[2] == last], dtype=float)
    cam = ee_camera_pose.inverse().transform_points(seg.reshape(-1, 3)).reshape(-1, 2, 3)
    vis = frustum.contains(cam).all(axis=1)
    out = cam[vis]
    if sigma > 0:
        rng = np.random.default_rng(seed) if rng is None else rng
        out = out + rng.normal(0.0, sigma, size=out.shape)
    out = [o for o in out]
    return (np.flatnonzero(vis), out) if return_ids else out
