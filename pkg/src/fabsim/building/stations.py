"""Base-station sequencing and manipulation-primitive programs for the brick wall."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import CompilationError, JointLimitError, PlanningError, Unreachable
from ..geometry import Pose2, Pose3
from ..kinematics import reach_margin, solve_ik
from .wall import BrickTask, ParametricWall

REACH_MARGIN = 0.05
APPROACH_HEIGHT = 0.05
TOOL_DOWN = np.diag([1.0, -1.0, -1.0])  # tool z pointing down, x along the brick


@dataclass
class Corridor:
    """Axis-aligned rectangle of allowed base positions in the CAD frame."""

    x_min: float = -0.5
    x_max: float = 7.0
    y_min: float = -1.6
    y_max: float = -0.8
    heading: float = 0.0
    step: float = 0.05
    lateral_step: float = 0.2

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise PlanningError("corridor is empty")

    def xs(self):
        n = int(math.floor((self.x_max - self.x_min) / self.step + 1e-9))
        return self.x_min + self.step * np.arange(n + 1)

    def ys(self, wall_side=1.0):
        """Lateral samples, nearest to the wall first (the wall lies towards +y by default)."""
        n = int(math.floor((self.y_max - self.y_min) / self.lateral_step + 1e-9))
        ys = self.y_min + self.lateral_step * np.arange(n + 1)
        return ys[::-1] if wall_side > 0 else ys

    def to_dict(self):
        return dict(self.__dict__)


def grip_pose(task: BrickTask, brick_height: float, lift=0.0) -> Pose3:
    """Tool pose gripping the top face of the brick, raised by ``lift`` along the wall vertical."""
    top = task.pose.translation + task.pose.rotation @ np.array([0.0, 0.0, 0.5 * brick_height + lift])
    return Pose3.from_rt(task.pose.rotation @ TOOL_DOWN, top)


@dataclass
class Primitive:
    kind: str  # pick_from_feeder | approach | place | retract | constant_joint_velocity
    pose: Pose3 = None
    q: np.ndarray = None
    speed: float = 0.0  # fraction of the joint speed limits

    def to_dict(self):
        return {
            "kind": self.kind,
            "pose": None if self.pose is None else self.pose.to_dict(),
            "q": None if self.q is None else [float(v) for v in self.q],
            "speed": self.speed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["kind"],
            None if d["pose"] is None else Pose3.from_dict(d["pose"]),
            None if d["q"] is None else np.array(d["q"], dtype=float),
            d["speed"],
        )


@dataclass
class BuildPlan:
    stations: list  # Pose2 in the CAD frame
    assignments: list  # per station, ordered brick ids
    passes: int
    solutions: dict = field(default_factory=dict)  # brick id -> place configuration
    programs: dict = field(default_factory=dict)  # brick id -> list of Primitive
    feeder: Pose3 = None  # feeder pose in the robot base frame
    pass_index: list = field(default_factory=list)  # per station, the height band it builds

    @property
    def order(self):
        return [b for a in self.assignments for b in a]

    def station_of(self):
        return {b: k for k, a in enumerate(self.assignments) for b in a}

    def to_dict(self):
        return {
            "passes": self.passes,
            "stations": [list(map(float, s.as_array())) for s in self.stations],
            "assignments": [list(map(int, a)) for a in self.assignments],
            "solutions": {str(k): [float(v) for v in q] for k, q in sorted(self.solutions.items())},
            "programs": {str(k): [p.to_dict() for p in prog] for k, prog in sorted(self.programs.items())},
            "feeder": None if self.feeder is None else self.feeder.to_dict(),
            "pass_index": list(map(int, self.pass_index)),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [Pose2(*s) for s in d["stations"]],
            [list(a) for a in d["assignments"]],
            d["passes"],
            {int(k): np.array(q, dtype=float) for k, q in d["solutions"].items()},
            {int(k): [Primitive.from_dict(p) for p in prog] for k, prog in d["programs"].items()},
            None if d["feeder"] is None else Pose3.from_dict(d["feeder"]),
            list(d.get("pass_index", [])),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class _Reach:
    """Reachability test with IK solutions cached per (station, brick)."""

    def __init__(self, model, tasks, brick_height):
        self.model = model
        self.targets = {t.brick_id: grip_pose(t, brick_height) for t in tasks}
        self.cache = {}
        self.last_q = None

    def margin_ok(self, base: Pose2, bid):
        return reach_margin(self.model, base.as_array(), self.targets[bid]) >= REACH_MARGIN

    def __call__(self, base: Pose2, bid):
        key = (float(base.x), float(base.y), float(base.theta), bid)
        if key in self.cache:
            return self.cache[key]
        b = base.as_array()
        target = self.targets[bid]
        q = None
        if reach_margin(self.model, b, target) >= REACH_MARGIN:
            seeds = () if self.last_q is None else (self.last_q,)
            try:
                q = solve_ik(self.model, b, target, seeds)
                self.last_q = q
            except (Unreachable, JointLimitError):
                q = None
        self.cache[key] = q
        return q


def _bands(tasks, passes):
    courses = max(t.course for t in tasks) + 1
    edges = np.linspace(0, courses, passes + 1).round().astype(int)
    return [[t for t in tasks if lo <= t.course < hi] for lo, hi in zip(edges[:-1], edges[1:])]


def _sweep(tasks, reach, corridor, claimed, stations, assignments, solutions, wall_side):
    """One left-to-right pass over ``tasks`` (already in build order)."""
    pending = [t for t in tasks if t.brick_id not in claimed]
    xs = corridor.xs()
    ys = corridor.ys(wall_side)
    x_floor = -np.inf
    while pending:
        # leftmost unclaimed brick of every (course, leaf) must stay reachable,
        # otherwise it would be stranded behind the sweep
        frontier = {}
        for t in pending:
            frontier.setdefault((t.course, t.leaf), t)
        need = [pending[0]] + [t for t in frontier.values() if t is not pending[0]]
        chosen = None
        for x in xs[::-1]:
            if x < x_floor:
                break
            for y in ys:
                base = Pose2(float(x), float(y), corridor.heading)
                if all(reach.margin_ok(base, t.brick_id) for t in need) and all(
                    reach(base, t.brick_id) is not None for t in need
                ):
                    chosen = base
                    break
            if chosen is not None:
                break
        if chosen is None:
            raise PlanningError(f"brick {pending[0].brick_id} is not reachable from any corridor sample")
        claim = []
        for t in pending:
            if all(s in claimed for s in t.supports):
                q = reach(chosen, t.brick_id)
                if q is not None:
                    claimed.add(t.brick_id)
                    solutions[t.brick_id] = q
                    claim.append(t.brick_id)
        stations.append(chosen)
        assignments.append(claim)
        pending = [t for t in pending if t.brick_id not in claimed]
        x_floor = chosen.x


def plan_stations(tasks, model, corridor: Corridor = None, *, wall: ParametricWall = None, max_passes=4, max_stations=15):
    """Greedy station sequence covering every brick.

    The wall is split into ``passes`` horizontal bands built one after the
    other; each band is swept with non-decreasing station x.  At each stop
    the base is placed at the farthest corridor sample from which the
    leftmost pending brick of every course in the band is reachable, then
    every pending brick that is reachable and whose supports are built is
    claimed in order.  The smallest number of passes that succeeds is used.
    """
    corridor = corridor or Corridor()
    wall = wall or ParametricWall()
    if not tasks:
        raise PlanningError("no tasks to plan")
    wall_side = 1.0 if np.mean([t.pose.translation[1] for t in tasks]) > 0.5 * (corridor.y_min + corridor.y_max) else -1.0
    reach = _Reach(model, tasks, wall.brick[2])
    last_err = None
    for passes in range(1, max_passes + 1):
        claimed, stations, assignments, solutions, bands = set(), [], [], {}, []
        try:
            for k, band in enumerate(_bands(tasks, passes)):
                _sweep(band, reach, corridor, claimed, stations, assignments, solutions, wall_side)
                bands += [k] * (len(stations) - len(bands))
        except PlanningError as exc:
            last_err = exc
            continue
        if len(stations) > max_stations and passes < max_passes:
            last_err = PlanningError(f"{len(stations)} stations with {passes} passes")
            continue
        return BuildPlan(stations, assignments, passes, solutions, pass_index=bands)
    raise last_err


def default_feeder() -> Pose3:
    """Brick feeder on the robot's rear deck, gripping pose in the base frame."""
    return Pose3.from_rt(TOOL_DOWN, (-0.2, 0.55, 0.75))


def compile_primitives(plan: BuildPlan, tasks, model, feeder: Pose3 = None, *, wall: ParametricWall = None, speed=0.5):
    """Attach pick -> approach -> place -> retract programs to every planned brick.

    ``feeder`` is the gripping pose at the brick feeder in the robot base
    frame.  All waypoints are solved by IK from the station; a feeder that
    cannot be reached raises :class:`CompilationError` naming the station.
    """
    wall = wall or ParametricWall()
    feeder = feeder or default_feeder()
    by_id = {t.brick_id: t for t in tasks}
    H = wall.brick[2]
    programs = {}
    for k, (station, ids) in enumerate(zip(plan.stations, plan.assignments)):
        b = station.as_array()
        world_feeder = station.to_pose3() @ feeder
        try:
            q_feed = solve_ik(model, b, world_feeder)
        except Unreachable:
            raise CompilationError(f"feeder not reachable from station {k}") from None
        for bid in ids:
            q_place = plan.solutions[bid]
            place = grip_pose(by_id[bid], H)
            above = grip_pose(by_id[bid], H, APPROACH_HEIGHT)
            try:
                q_above = solve_ik(model, b, above, (q_place,))
            except Unreachable:
                raise CompilationError(f"approach pose of brick {bid} not reachable from station {k}") from None
            programs[bid] = [
                Primitive("pick_from_feeder", world_feeder, q_feed, speed),
                Primitive("approach", above, q_above, speed),
                Primitive("place", place, q_place, 0.1 * speed),
                Primitive("retract", above, q_above, 0.1 * speed),
            ]
    plan.programs = programs
    plan.feeder = feeder
    return plan
