from .stations import BuildPlan, Corridor, Primitive, compile_primitives, grip_pose, plan_stations
from .wall import BrickTask, ParametricWall, adapt_wall_to_site, generate_wall

__all__ = [
    "BrickTask",
    "BuildPlan",
    "Corridor",
    "ParametricWall",
    "Primitive",
    "adapt_wall_to_site",
    "compile_primitives",
    "generate_wall",
    "grip_pose",
    "plan_stations",
]
