"""Deterministic 2D multi-robot world.

Robots are discs driven by a unicycle model, obstacles are line segments,
and every robot carries a planar lidar.  A :class:`World` is a value: the
functions here never mutate their inputs and return fresh worlds instead.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

DEFAULT_DT = 0.1
DEFAULT_RADIUS = 0.12


class Status(enum.IntEnum):
    ACTIVE = 0
    ARRIVED = 1
    COLLIDED = 2
    TIMED_OUT = 3


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into [-pi, pi].

    Angles already in range are returned untouched, so a zero turn rate
    preserves the heading bit for bit.
    """
    theta = np.asarray(theta, dtype=np.float64)
    wrapped = np.where(np.abs(theta) <= np.pi, theta,
                       np.mod(theta + np.pi, 2.0 * np.pi) - np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    v: float
    w: float
    radius: float
    goal: tuple[float, float]
    status: Status = Status.ACTIVE

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("robot radius must be positive")
        if self.v < 0:
            raise ValueError("backward motion (v < 0) is not allowed")


@dataclass(frozen=True)
class ObstacleSegment:
    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        if tuple(self.a) == tuple(self.b):
            raise ValueError("degenerate obstacle segment (a == b)")


@dataclass(frozen=True)
class LidarSpec:
    n_beams: int = 512
    fov: float = math.pi
    max_range: float = 4.0

    def __post_init__(self):
        if self.n_beams < 2:
            raise ValueError("lidar needs at least 2 beams")
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("lidar fov must lie in (0, 2*pi]")
        if self.max_range <= 0:
            raise ValueError("lidar max_range must be positive")

    def beam_offsets(self) -> np.ndarray:
        """Beam angles relative to the robot heading, from right to left."""
        i = np.arange(self.n_beams, dtype=np.float64)
        return -self.fov / 2.0 + i * (self.fov / (self.n_beams - 1))


@dataclass
class World:
    """All robots and obstacles at one simulation tick.

    Robot data is kept column-wise (one array per field, one row per robot)
    so that sensing and collision checks vectorize.  ``ids`` carries a
    stable robot identity independent of storage order.
    """

    pos: np.ndarray            # (N, 2)
    theta: np.ndarray          # (N,)
    v: np.ndarray              # (N,)
    w: np.ndarray              # (N,)
    radius: np.ndarray         # (N,)
    goal: np.ndarray           # (N, 2)
    status: np.ndarray         # (N,) int8, values of Status
    obstacles: np.ndarray      # (K, 4) rows of (ax, ay, bx, by)
    bounds: tuple[float, float, float, float] = (-5.0, -5.0, 5.0, 5.0)
    dt: float = DEFAULT_DT
    tick: int = 0
    ids: Optional[np.ndarray] = None
    scenario: Any = field(default=None, compare=False)

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64).reshape(-1, 2)
        n = len(self.pos)
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(n)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(n)
        self.w = np.asarray(self.w, dtype=np.float64).reshape(n)
        self.radius = np.asarray(self.radius, dtype=np.float64).reshape(n)
        self.goal = np.asarray(self.goal, dtype=np.float64).reshape(n, 2)
        self.status = np.asarray(self.status, dtype=np.int8).reshape(n)
        self.obstacles = np.asarray(self.obstacles, dtype=np.float64).reshape(-1, 4)
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64).reshape(n)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if np.any(self.radius <= 0):
            raise ValueError("robot radius must be positive")

    @property
    def n_robots(self) -> int:
        return len(self.pos)

    def robot(self, i: int) -> RobotState:
        return RobotState(
            pose=Pose(float(self.pos[i, 0]), float(self.pos[i, 1]), float(self.theta[i])),
            v=float(self.v[i]),
            w=float(self.w[i]),
            radius=float(self.radius[i]),
            goal=(float(self.goal[i, 0]), float(self.goal[i, 1])),
            status=Status(int(self.status[i])),
        )

    def segments(self) -> list[ObstacleSegment]:
        return [ObstacleSegment((r[0], r[1]), (r[2], r[3])) for r in self.obstacles]

    def copy(self, **changes) -> "World":
        base = dict(
            pos=self.pos.copy(), theta=self.theta.copy(), v=self.v.copy(), w=self.w.copy(),
            radius=self.radius.copy(), goal=self.goal.copy(), status=self.status.copy(),
            obstacles=self.obstacles, bounds=self.bounds, dt=self.dt, tick=self.tick,
            ids=self.ids.copy(), scenario=self.scenario,
        )
        base.update(changes)
        return World(**base)

    def permuted(self, order) -> "World":
        order = np.asarray(order)
        return self.copy(
            pos=self.pos[order], theta=self.theta[order], v=self.v[order], w=self.w[order],
            radius=self.radius[order], goal=self.goal[order], status=self.status[order],
            ids=self.ids[order],
        )

    def inside_bounds(self) -> np.ndarray:
        x0, y0, x1, y1 = self.bounds
        p = self.pos
        return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        arrays = ("pos", "theta", "v", "w", "radius", "goal", "status", "obstacles", "ids")
        return (
            all(np.array_equal(getattr(self, k), getattr(other, k)) for k in arrays)
            and self.bounds == other.bounds and self.dt == other.dt and self.tick == other.tick
        )


def make_world(robots: list[RobotState], obstacles=(), bounds=(-5.0, -5.0, 5.0, 5.0),
               dt: float = DEFAULT_DT, scenario=None) -> World:
    """Build a :class:`World` from per-robot records, checking construction invariants."""
    segs = [s if isinstance(s, ObstacleSegment) else ObstacleSegment(*s) for s in obstacles]
    world = World(
        pos=[(r.pose.x, r.pose.y) for r in robots] or np.zeros((0, 2)),
        theta=[wrap_angle(r.pose.theta) for r in robots],
        v=[r.v for r in robots],
        w=[r.w for r in robots],
        radius=[r.radius for r in robots],
        goal=[r.goal for r in robots] or np.zeros((0, 2)),
        status=[int(r.status) for r in robots],
        obstacles=[(*s.a, *s.b) for s in segs] or np.zeros((0, 4)),
        bounds=tuple(float(b) for b in bounds),
        dt=dt,
        scenario=scenario,
    )
    if not np.all(world.inside_bounds()):
        raise ValueError("robot centre outside world bounds")
    return world


def step_kinematics(pose: Pose, v: float, w: float, dt: float) -> Pose:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose(
        pose.x + v * math.cos(pose.theta) * dt,
        pose.y + v * math.sin(pose.theta) * dt,
        wrap_angle(pose.theta + w * dt),
    )


def _step_arrays(pos, theta, v, w, dt):
    # Same arithmetic as step_kinematics, element-wise.
    new_pos = np.empty_like(pos)
    new_pos[:, 0] = pos[:, 0] + v * np.cos(theta) * dt
    new_pos[:, 1] = pos[:, 1] + v * np.sin(theta) * dt
    return new_pos, wrap_angle(theta + w * dt)


def _ray_segment_distances(origins, dirs, obstacles):
    """Distance along each ray to each segment; inf where there is no hit.

    origins (N, 2), dirs (N, B, 2), obstacles (K, 4) -> (N, B, K)
    """
    a = obstacles[:, 0:2]
    e = obstacles[:, 2:4] - a
    q = a[None, :, :] - origins[:, None, :]                  # (N, K, 2)
    dx = dirs[..., 0][..., None]
    dy = dirs[..., 1][..., None]
    ex, ey = e[:, 0], e[:, 1]
    qx, qy = q[:, None, :, 0], q[:, None, :, 1]
    denom = dx * ey - dy * ex
    ok = denom != 0.0
    safe = np.where(ok, denom, 1.0)
    t = (qx * ey - qy * ex) / safe
    u = (qx * dy - qy * dx) / safe
    hit = ok & (t > 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf)


def _ray_disc_distances(origins, dirs, centers, radii):
    """Distance along each ray to each disc; inf where there is no hit.

    origins (N, 2), dirs (N, B, 2), centers (M, 2), radii (M,) -> (N, B, M)
    """
    f = origins[:, None, :] - centers[None, :, :]            # (N, M, 2)
    b = dirs[..., 0][..., None] * f[:, None, :, 0] + dirs[..., 1][..., None] * f[:, None, :, 1]
    c = (f[..., 0] ** 2 + f[..., 1] ** 2 - radii[None, :] ** 2)[:, None, :]
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t1 = -b - root
    t2 = -b + root
    t = np.where(t1 > 0.0, t1, np.where(t2 > 0.0, t2, np.inf))
    return np.where(disc >= 0.0, t, np.inf)


def cast_scans(world: World, spec: LidarSpec, robots=None) -> np.ndarray:
    """Lidar scans for several robots at once, shape (len(robots), n_beams).

    Other robots (whatever their status) are sensed as discs; a robot never
    sees itself.  Beams with no hit return ``spec.max_range`` exactly.
    """
    idx = np.arange(world.n_robots) if robots is None else np.atleast_1d(np.asarray(robots))
    origins = world.pos[idx]
    angles = world.theta[idx][:, None] + spec.beam_offsets()[None, :]
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    best = np.full(angles.shape, np.inf)
    if len(world.obstacles):
        best = np.minimum(best, _ray_segment_distances(origins, dirs, world.obstacles).min(axis=2))
    if world.n_robots > 1:
        d = _ray_disc_distances(origins, dirs, world.pos, world.radius)
        d[np.arange(len(idx)), :, idx] = np.inf
        best = np.minimum(best, d.min(axis=2))
    return np.minimum(best, spec.max_range)


def cast_scan(world: World, robot_index: int, spec: LidarSpec) -> np.ndarray:
    if not 0 <= robot_index < world.n_robots:
        raise IndexError(f"robot index {robot_index} out of range")
    return cast_scans(world, spec, [robot_index])[0]


def point_segment_distance(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point (N, 2) to each segment (K, 4) -> (N, K)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    segments = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    ee = np.einsum("kd,kd->k", e, e)
    rel = points[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum("nkd,kd->nk", rel, e) / ee, 0.0, 1.0)
    closest = a[None, :, :] + s[..., None] * e[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def detect_collisions(world: World) -> np.ndarray:
    """Per-robot collision flags (touching exactly is not a collision)."""
    n = world.n_robots
    hit = np.zeros(n, dtype=bool)
    if n > 1:
        diff = world.pos[:, None, :] - world.pos[None, :, :]
        dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
        close = dist < (world.radius[:, None] + world.radius[None, :])
        np.fill_diagonal(close, False)
        hit |= close.any(axis=1)
    if len(world.obstacles) and n:
        d = point_segment_distance(world.pos, world.obstacles)
        hit |= (d < world.radius[:, None]).any(axis=1)
    return hit


def world_step(world: World, actions) -> World:
    """Advance every active robot one tick with its (v, w) command.

    ``actions`` has one row per robot in storage order; rows of robots that
    are no longer active are ignored and those robots stay where they are.
    """
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (world.n_robots, 2):
        raise ValueError(
            f"expected actions of shape ({world.n_robots}, 2), got {actions.shape}")
    active = world.status == Status.ACTIVE
    v = np.where(active, actions[:, 0], 0.0)
    w = np.where(active, actions[:, 1], 0.0)
    pos, theta = _step_arrays(world.pos, world.theta, v, w, world.dt)
    pos = np.where(active[:, None], pos, world.pos)
    theta = np.where(active, theta, world.theta)
    return world.copy(pos=pos, theta=theta, v=v, w=w, tick=world.tick + 1)
