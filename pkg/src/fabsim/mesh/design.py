"""Doubly curved two-leaf wire mesh designs and the synthetic deflection process."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError


@dataclass
class MeshDesign:
    """Layers of straight wire segments in the CAD frame.

    ``layers[i]`` has shape (n_wires, 2, 3); ``normals[i]`` (n_wires, 3) is
    the horizontal surface normal used to measure lateral deviation.
    Layer 0 is built by hand and attached to the supporting structure.
    """

    layers: list
    normals: list
    pitch: float = 0.02
    hand_built: tuple = (0,)

    def __post_init__(self):
        self.layers = [np.asarray(L, dtype=float).reshape(-1, 2, 3) for L in self.layers]
        self.normals = [np.asarray(n, dtype=float).reshape(-1, 3) for n in self.normals]
        if len(self.layers) != len(self.normals):
            raise ConfigurationError("one normal set per layer is required")

    @property
    def n_layers(self):
        return len(self.layers)

    def to_dict(self):
        return {
            "pitch": self.pitch,
            "hand_built": list(self.hand_built),
            "layers": [L.tolist() for L in self.layers],
            "normals": [n.tolist() for n in self.normals],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["layers"], d["normals"], d.get("pitch", 0.02), tuple(d.get("hand_built", (0,))))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def surface_offset(x, z, width, height, amplitude):
    """Lateral offset y(x, z) of the doubly curved surface."""
    return amplitude * np.sin(math.pi * x / width) * (1.0 + 0.5 * np.sin(math.pi * z / height))


def generate_mesh(
    width=1.0, layers=21, pitch=0.02, leaf_gap=0.2, amplitude=0.05, segment=0.1, origin=(0.0, 0.0, 0.3)
):
    """Horizontal wires of a two-leaf doubly curved patch, one layer every ``pitch`` metres."""
    if layers < 2 or width <= 0 or pitch <= 0 or segment <= 0:
        raise ConfigurationError("invalid mesh parameters")
    ox, oy, oz = origin
    height = layers * pitch
    xs = np.linspace(0.0, width, int(round(width / segment)) + 1)
    out, normals = [], []
    for i in range(layers):
        z = i * pitch
        segs, nrm = [], []
        for leaf in (0, 1):
            y = surface_offset(xs, z, width, height, amplitude) + leaf * leaf_gap
            P = np.stack([xs + ox, y + oy, np.full_like(xs, z + oz)], axis=1)
            for a, b in zip(P[:-1], P[1:]):
                segs.append((a, b))
                t = (b - a) / np.linalg.norm(b - a)
                n = np.array([-t[1], t[0], 0.0])
                nrm.append(n / np.linalg.norm(n))
        out.append(np.array(segs))
        normals.append(np.array(nrm))
    return MeshDesign(out, normals, pitch)


@dataclass
class DeflectionModel:
    """Per-layer pull along the surface normal plus zero-mean noise (ground truth only).

    Each new layer inherits ``inherit`` times the previous layer's error,
    because it is welded onto it, then is pulled by ``gain`` metres.
    """

    gain: float = 0.002
    sigma: float = 0.0002
    inherit: float = 1.0
    max_pull: float = 0.01

    def __post_init__(self):
        if self.sigma < 0 or self.max_pull < 0:
            raise ConfigurationError("deflection sigma and bound must be >= 0")

    def pull(self, normals, rng):
        """Per-endpoint displacement (n_wires, 2, 3) for one layer."""
        g = float(np.clip(self.gain, -self.max_pull, self.max_pull))
        d = np.repeat((g * normals)[:, None, :], 2, axis=1)
        if self.sigma > 0:
            d = d + self.sigma * rng.standard_normal(d.shape[:2])[..., None] * normals[:, None, :]
        return d

    def to_dict(self):
        return dict(self.__dict__)
