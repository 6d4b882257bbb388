"""Layer-by-layer weld, measure and compensate loop."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import MeasurementUnavailable, WeldReachError
from ..geometry import Pose3

WELD_REACH = 0.05  # max horizontal distance between a planned endpoint and the layer below


@dataclass
class ContourError:
    layer: int
    wire_ids: np.ndarray  # observed wires
    lateral: np.ndarray  # (n_obs, 2) signed deviation along the surface normal, metres

    @property
    def max(self):
        return float(np.max(np.abs(self.lateral))) if self.lateral.size else 0.0

    @property
    def rms(self):
        return float(np.sqrt(np.mean(self.lateral**2))) if self.lateral.size else 0.0


def weld_layer(world, planned, layer, deflection, rng, design):
    """Weld ``planned`` segments as layer ``layer``; returns and records the as-built segments.

    ``world.mesh`` maps layer index to as-built (n_wires, 2, 3) arrays.
    """
    planned = np.asarray(planned, dtype=float)
    prev = world.mesh.get(layer - 1)
    if prev is None:
        raise WeldReachError(f"layer {layer - 1} has not been built")
    gap = np.linalg.norm((planned - prev)[..., :2], axis=-1)
    if np.max(gap) > WELD_REACH:
        w = int(np.argmax(np.max(gap, axis=1)))
        raise WeldReachError(f"wire {w} of layer {layer} is {np.max(gap) * 1e3:.1f} mm from the layer below")
    inherited = deflection.inherit * (prev - design.layers[layer - 1])
    built = planned + inherited + deflection.pull(design.normals[layer], rng)
    world.mesh[layer] = built
    return built


def contour_truth(world, design, layer):
    """Ground-truth lateral deviation of an as-built layer, (n_wires, 2)."""
    e = world.mesh[layer] - design.layers[layer]
    return np.einsum("wkj,wj->wk", e, design.normals[layer])


def measure_contour(observations, camera_pose: Pose3, design, layer, world_to_cad: Pose3 = None):
    """Lateral deviation of observed wires from the design, in the CAD frame.

    ``observations`` is ``(wire_ids, endpoints)`` with camera-frame
    endpoints; ``camera_pose`` is the camera in the world frame (normally
    looked up from a frame graph).
    """
    ids, ends = observations
    if len(ids) == 0:
        raise MeasurementUnavailable(f"no wires of layer {layer} observed")
    ids = np.asarray(ids, dtype=int)
    E = np.asarray(ends, dtype=float).reshape(-1, 3)
    T = camera_pose if world_to_cad is None else world_to_cad @ camera_pose
    P = T.transform_points(E).reshape(-1, 2, 3)
    e = P - design.layers[layer][ids]
    lateral = np.einsum("wkj,wj->wk", e, design.normals[layer][ids])
    return ContourError(layer, ids, lateral)


def compensate_next_layer(design, contour: ContourError, kappa=1.0, max_offset=WELD_REACH):
    """Planned segments of layer ``contour.layer + 1`` offset against the measured error.

    Wires without an observation take the deviation of the nearest observed
    wire (by index).  Offsets are clamped to ``max_offset``.
    """
    nxt = contour.layer + 1
    n = design.layers[nxt].shape[0]
    obs = np.asarray(contour.wire_ids)
    nearest = obs[np.argmin(np.abs(np.arange(n)[:, None] - obs[None, :]), axis=1)]
    lookup = {int(w): k for k, w in enumerate(obs)}
    lat = contour.lateral[[lookup[int(w)] for w in nearest]]
    off = np.clip(-kappa * lat, -max_offset, max_offset)
    return design.layers[nxt] + off[..., None] * design.normals[nxt][:, None, :]


def write_contour_csv(rows, path):
    """``rows`` of (layer, max_m, rms_m) written in millimetres."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "max_mm", "rms_mm"])
        for layer, mx, rms in rows:
            w.writerow([layer, repr(float(mx) * 1e3), repr(float(rms) * 1e3)])
