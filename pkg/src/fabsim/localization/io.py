"""ASCII PLY point clouds."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .estimates import PointCloud


def write_ply(cloud: PointCloud, path):
    pts = cloud.points
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"comment frame {cloud.frame}\n")
        fh.write(f"element vertex {len(pts)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for x, y, z in pts.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_ply(path) -> PointCloud:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ConfigurationError(f"{path}: not a PLY file")
    n, frame, body = None, "world", None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["format", "ascii"] or not parts:
            continue
        if parts[0] == "format":
            raise ConfigurationError(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["comment", "frame"]:
            frame = parts[2]
        elif parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts[0] == "end_header":
            body = i + 1
            break
    if n is None or body is None:
        raise ConfigurationError(f"{path}: malformed PLY header")
    pts = np.array([[float(v) for v in l.split()[:3]] for l in lines[body : body + n]]).reshape(-1, 3)
    return PointCloud(pts, frame)
