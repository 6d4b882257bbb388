from .metrics import RunMetrics, config_hash
from .noise import PRESETS, NoiseConfig, noise_from
from .scan import Box, scan_world
from .scenarios import execute_scenario, load_config, resolve_config
from .world import WorldModel, integrate_unicycle, step

__all__ = [
    "Box",
    "NoiseConfig",
    "PRESETS",
    "RunMetrics",
    "WorldModel",
    "config_hash",
    "execute_scenario",
    "integrate_unicycle",
    "load_config",
    "noise_from",
    "resolve_config",
    "scan_world",
    "step",
]
