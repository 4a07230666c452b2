"""Training scenarios, stage populations and per-robot respawn."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from .seeding import derive_seed, make_rng
from .sim import DEFAULT_DT, Status, World, point_segment_distance

MAX_TRIES = 2000
PAPER_STAGE_ONE_ROBOTS = 20
PAPER_STAGE_TWO_ROBOTS = 58


class ScenarioError(RuntimeError):
    """Robots or goals could not be placed within the retry budget."""


class ScenarioId(str, enum.Enum):
    CIRCLE = "circle"
    CORRIDOR = "corridor"
    CROSSING = "crossing"
    SWAP = "swap"
    RANDOM_EMPTY = "random_empty"
    RANDOM_OBSTACLES = "random_obstacles"
    EVACUATION = "evacuation"


class SpawnRule(str, enum.Enum):
    PERIMETER = "perimeter"
    RANDOM = "random"
    PAIRED = "paired"


class Stage(enum.IntEnum):
    ONE = 1
    TWO = 2


# Stable numeric keys for seed derivation.
_SCENARIO_KEY = {sid: i for i, sid in enumerate(ScenarioId)}


@dataclass(frozen=True)
class ScenarioSpec:
    id: ScenarioId
    n_robots: int
    bounds: tuple[float, float, float, float]
    obstacle_layout: tuple[tuple[float, float, float, float], ...] = ()
    spawn_rule: SpawnRule = SpawnRule.RANDOM
    circle_radius: float = 4.0
    regions: tuple = ()
    random_boxes: Optional[tuple] = None   # ((count_lo, count_hi), (size_lo, size_hi))
    radius: float = 0.12
    min_separation: float = 0.1
    wall_clearance: float = 0.05
    min_goal_distance: float = 1.0
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.n_robots < 1:
            raise ValueError("a scenario needs at least one robot")
        if self.spawn_rule == SpawnRule.PAIRED and not self.regions:
            raise ValueError(f"paired scenario {self.id.value} has no regions")

    def with_robots(self, n: int) -> "ScenarioSpec":
        return replace(self, n_robots=int(n))


@lru_cache(maxsize=None)
def _load_catalog_text(text: str) -> dict:
    return yaml.safe_load(text)


def load_catalog(path=None) -> dict[ScenarioId, ScenarioSpec]:
    """Parse a scenario catalog; defaults to the packaged one."""
    if path is None:
        text = resources.files("multinav").joinpath("data/scenarios.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = _load_catalog_text(text)
    if raw.get("version") != 1:
        raise ValueError(f"unsupported scenario catalog version {raw.get('version')!r}")
    common = dict(
        radius=float(raw.get("robot_radius", 0.12)),
        min_separation=float(raw.get("min_separation", 0.1)),
        wall_clearance=float(raw.get("wall_clearance", 0.05)),
        min_goal_distance=float(raw.get("min_goal_distance", 1.0)),
    )
    known = {"spawn_rule", "bounds", "obstacles", "circle_radius", "regions",
             "random_boxes", "default_robots"}
    out = {}
    for name, entry in raw["scenarios"].items():
        unknown = set(entry) - known
        if unknown:
            raise ValueError(f"scenario {name}: unknown keys {sorted(unknown)}")
        boxes = entry.get("random_boxes")
        out[ScenarioId(name)] = ScenarioSpec(
            id=ScenarioId(name),
            n_robots=int(entry.get("default_robots", 1)),
            bounds=tuple(float(b) for b in entry["bounds"]),
            obstacle_layout=tuple(tuple(float(c) for c in seg) for seg in entry.get("obstacles", [])),
            spawn_rule=SpawnRule(entry["spawn_rule"]),
            circle_radius=float(entry.get("circle_radius", 4.0)),
            regions=tuple((tuple(r["start"]), tuple(r["goal"])) for r in entry.get("regions", [])),
            random_boxes=(tuple(boxes["count"]), tuple(boxes["size"])) if boxes else None,
            **common,
        )
    return out


def scenario(sid, n_robots: Optional[int] = None) -> ScenarioSpec:
    spec = load_catalog()[ScenarioId(sid)]
    return spec if n_robots is None else spec.with_robots(n_robots)


def _random_box_segments(spec: ScenarioSpec, rng: np.random.Generator) -> list:
    (lo, hi), (smin, smax) = spec.random_boxes
    x0, y0, x1, y1 = spec.bounds
    segs = []
    for _ in range(int(rng.integers(lo, hi + 1))):
        w, h = rng.uniform(smin, smax, size=2)
        cx = rng.uniform(x0 + 1.0 + w / 2, x1 - 1.0 - w / 2)
        cy = rng.uniform(y0 + 1.0 + h / 2, y1 - 1.0 - h / 2)
        a, b, c, d = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
        segs += [(a, b, c, b), (c, b, c, d), (c, d, a, d), (a, d, a, b)]
    return segs


class _Placer:
    """Validity checks shared by initial placement and respawn."""

    def __init__(self, spec: ScenarioSpec, obstacles: np.ndarray):
        self.spec = spec
        self.obstacles = obstacles
        self.sep = 2 * spec.radius + spec.min_separation

    def clear_of_walls(self, p) -> bool:
        if not len(self.obstacles):
            return True
        d = point_segment_distance(np.asarray(p)[None], self.obstacles)
        return bool(d.min() > self.spec.radius + self.spec.wall_clearance)

    def inside(self, p) -> bool:
        x0, y0, x1, y1 = self.spec.bounds
        r = self.spec.radius
        return x0 + r <= p[0] <= x1 - r and y0 + r <= p[1] <= y1 - r

    def separated(self, p, others) -> bool:
        if len(others) == 0:
            return True
        d = np.sqrt(((np.asarray(others) - np.asarray(p)) ** 2).sum(axis=1))
        return bool(d.min() > self.sep)

    def valid_start(self, p, others) -> bool:
        return self.inside(p) and self.clear_of_walls(p) and self.separated(p, others)

    def valid_goal(self, g, start, other_goals) -> bool:
        return (self.inside(g) and self.clear_of_walls(g)
                and math.dist(g, start) >= self.spec.min_goal_distance
                and self.separated(g, other_goals))


def _uniform_in(rect, rng):
    x0, y0, x1, y1 = rect
    return np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])


def _draw_pair(spec: ScenarioSpec, placer: _Placer, slot: int, rng, others, other_goals):
    """One (start, goal, heading) for robot ``slot`` that passes every check."""
    r = spec.radius
    for _ in range(MAX_TRIES):
        if spec.spawn_rule == SpawnRule.PERIMETER:
            phi = rng.uniform(-math.pi, math.pi)
            start = spec.circle_radius * np.array([math.cos(phi), math.sin(phi)])
            goal = -start
        elif spec.spawn_rule == SpawnRule.PAIRED:
            s_rect, g_rect = spec.regions[slot % len(spec.regions)]
            start, goal = _uniform_in(s_rect, rng), _uniform_in(g_rect, rng)
        else:
            x0, y0, x1, y1 = spec.bounds
            inner = (x0 + r, y0 + r, x1 - r, y1 - r)
            start, goal = _uniform_in(inner, rng), _uniform_in(inner, rng)
        heading = rng.uniform(-math.pi, math.pi)
        if spec.spawn_rule == SpawnRule.PERIMETER:
            heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
        if placer.valid_start(start, others) and placer.valid_goal(goal, start, other_goals):
            return start, goal, heading
    raise ScenarioError(
        f"could not place robot {slot} in scenario {spec.id.value} after {MAX_TRIES} tries")


def build_world(spec: ScenarioSpec, seed: int) -> World:
    """Deterministic world for ``(spec, seed)`` with non-overlapping starts."""
    rng = make_rng(seed, _SCENARIO_KEY[spec.id])
    segs = list(spec.obstacle_layout)
    if spec.random_boxes:
        segs += _random_box_segments(spec, rng)
    obstacles = np.array(segs, dtype=np.float64).reshape(-1, 4)
    placer = _Placer(spec, obstacles)
    n = spec.n_robots
    pos = np.zeros((n, 2))
    goal = np.zeros((n, 2))
    theta = np.zeros(n)

    if spec.spawn_rule == SpawnRule.PERIMETER:
        offset = rng.uniform(-math.pi, math.pi)
        phi = offset + 2 * math.pi * np.arange(n) / n
        pos = spec.circle_radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        goal = -pos
        theta = np.arctan2(goal[:, 1] - pos[:, 1], goal[:, 0] - pos[:, 0])
        for i in range(n):
            if not (placer.valid_start(pos[i], np.delete(pos, i, axis=0))
                    and placer.valid_goal(goal[i], pos[i], np.delete(goal, i, axis=0))):
                raise ScenarioError(f"{n} robots do not fit on the circle of {spec.id.value}")
    else:
        for i in range(n):
            pos[i], goal[i], theta[i] = _draw_pair(spec, placer, i, rng, pos[:i], goal[:i])

    return World(
        pos=pos, theta=theta, v=np.zeros(n), w=np.zeros(n),
        radius=np.full(n, spec.radius), goal=goal, status=np.zeros(n, dtype=np.int8),
        obstacles=obstacles, bounds=spec.bounds, dt=spec.dt, scenario=spec,
    )


def respawn(world: World, robot_index: int, seed_stream: np.random.Generator,
            spec: Optional[ScenarioSpec] = None) -> World:
    """Fresh start and goal for one finished robot; every other robot is untouched.

    The caller owns the robot's scan history and must clear it.
    """
    spec = spec or world.scenario
    if spec is None:
        raise ValueError("world has no scenario attached; pass spec explicitly")
    i = robot_index
    if world.status[i] == Status.ACTIVE:
        raise ValueError(f"robot {i} is still active")
    placer = _Placer(spec, world.obstacles)
    others = np.delete(world.pos, i, axis=0)
    other_goals = np.delete(world.goal, i, axis=0)
    start, goal, heading = _draw_pair(spec, placer, i, seed_stream, others, other_goals)
    pos, g, theta = world.pos.copy(), world.goal.copy(), world.theta.copy()
    v, w, status = world.v.copy(), world.w.copy(), world.status.copy()
    pos[i], g[i], theta[i] = start, goal, heading
    v[i] = w[i] = 0.0
    status[i] = Status.ACTIVE
    return world.copy(pos=pos, goal=g, theta=theta, v=v, w=w, status=status)


@dataclass(frozen=True)
class StageSpec:
    """Scenario allocation for one curriculum stage.

    ``enforce_paper_counts`` checks the population sizes used in the full
    setup (20 robots on obstacle-free random worlds, then 58 across the
    full set); desk-scale runs turn it off.
    """

    stage: Stage
    scenarios: tuple[ScenarioSpec, ...] = field(default_factory=tuple)
    enforce_paper_counts: bool = True

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("a stage needs at least one scenario")
        if not self.enforce_paper_counts:
            return
        if self.stage == Stage.ONE:
            if self.total_robots != PAPER_STAGE_ONE_ROBOTS:
                raise ValueError(f"stage one must have {PAPER_STAGE_ONE_ROBOTS} robots")
            if any(s.id != ScenarioId.RANDOM_EMPTY for s in self.scenarios):
                raise ValueError("stage one trains on obstacle-free random worlds only")
        elif self.total_robots != PAPER_STAGE_TWO_ROBOTS:
            raise ValueError(f"stage two must have {PAPER_STAGE_TWO_ROBOTS} robots")

    @property
    def total_robots(self) -> int:
        return sum(s.n_robots for s in self.scenarios)


PAPER_STAGE_TWO_ALLOCATION = {
    ScenarioId.CIRCLE: 12,
    ScenarioId.CORRIDOR: 6,
    ScenarioId.CROSSING: 8,
    ScenarioId.SWAP: 6,
    ScenarioId.RANDOM_EMPTY: 8,
    ScenarioId.RANDOM_OBSTACLES: 10,
    ScenarioId.EVACUATION: 8,
}


def paper_stage(stage: Stage) -> StageSpec:
    if Stage(stage) == Stage.ONE:
        return StageSpec(Stage.ONE, (scenario(ScenarioId.RANDOM_EMPTY, PAPER_STAGE_ONE_ROBOTS),))
    specs = tuple(scenario(sid, n) for sid, n in PAPER_STAGE_TWO_ALLOCATION.items())
    return StageSpec(Stage.TWO, specs)


def stage_worlds(stage: StageSpec, seed: int) -> list[World]:
    return [build_world(spec, derive_seed(seed, int(stage.stage), k))
            for k, spec in enumerate(stage.scenarios)]
