"""Noise presets for the simulator.

The magnitudes are simulation choices: the nominal preset is set so that the
brick-wall accuracy bound is met with a clear but not vacuous margin, and the
harsh preset is expected to violate it.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError

CHANNELS = ("slip", "tags", "wires", "placement", "scan", "site", "deflection")


@dataclass(frozen=True)
class NoiseConfig:
    slip_bias_v: float = 0.0  # fractional forward-speed bias
    slip_bias_w: float = 0.0  # fractional yaw-rate bias
    slip_sigma_v: float = 0.0  # m/s
    slip_sigma_w: float = 0.0  # rad/s
    tag_sigma_t: float = 0.0  # m
    tag_sigma_r: float = 0.0  # rad
    wire_sigma: float = 0.0  # m
    placement_sigma: float = 0.0  # m, per axis
    scan_sigma: float = 0.0  # m, along the ray
    cad_prior_t: float = 0.01  # m, error of the robot's prior for the CAD frame
    cad_prior_r: float = 0.003  # rad

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k.startswith("slip_bias"):
                continue
            if v < 0:
                raise ConfigurationError(f"noise parameter {k} must be >= 0")

    def to_dict(self):
        return asdict(self)


PRESETS = {
    "zero": NoiseConfig(),
    "nominal": NoiseConfig(
        slip_bias_v=0.01,
        slip_bias_w=0.01,
        slip_sigma_v=0.005,
        slip_sigma_w=0.002,
        tag_sigma_t=1e-3,
        tag_sigma_r=5e-4,
        wire_sigma=5e-4,
        placement_sigma=5e-4,
        scan_sigma=2e-3,
    ),
    "harsh": NoiseConfig(
        slip_bias_v=0.05,
        slip_bias_w=0.05,
        slip_sigma_v=0.02,
        slip_sigma_w=0.01,
        tag_sigma_t=5e-3,
        tag_sigma_r=3e-3,
        wire_sigma=2e-3,
        placement_sigma=3e-3,
        scan_sigma=1e-2,
        cad_prior_t=0.05,
        cad_prior_r=0.01,
    ),
}


def noise_from(spec) -> NoiseConfig:
    """Preset name, dict (optionally with a ``preset`` base) or NoiseConfig."""
    if isinstance(spec, NoiseConfig):
        return spec
    if isinstance(spec, str):
        if spec not in PRESETS:
            raise ConfigurationError(f"unknown noise preset {spec!r}; choose from {sorted(PRESETS)}")
        return PRESETS[spec]
    spec = dict(spec)
    base = PRESETS[spec.pop("preset", "zero")].to_dict()
    unknown = set(spec) - set(base)
    if unknown:
        raise ConfigurationError(f"unknown noise parameters: {sorted(unknown)}")
    base.update(spec)
    return NoiseConfig(**base)


def channel_rngs(seed):
    """Independent generators per noise channel, so toggling one channel leaves the others unchanged."""
    children = np.random.SeedSequence(seed).spawn(len(CHANNELS))
    return {name: np.random.default_rng(s) for name, s in zip(CHANNELS, children)}
