"""Frozen-policy evaluation, trajectory logs and bit-exact replay."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .config import ConfigError
from .mdp import (Event, Observation, RunningNormalizer, RewardConfig, assemble_observations,
                  normalizer_apply, step_rewards)
from .policy import NetConfig, clamp_action, policy_forward, sample_action
from .scenarios import ScenarioSpec, build_world, load_catalog, ScenarioId
from .seeding import derive_seed, make_rng
from .sim import LidarSpec, Status, World, cast_scans, detect_collisions, world_step

TRAJECTORY_HEADER = ["tick", "robot", "x", "y", "theta", "v", "w", "reward", "event"]

_STATUS_OF_EVENT = {Event.ARRIVAL: Status.ARRIVED, Event.COLLISION: Status.COLLIDED,
                    Event.TIMEOUT: Status.TIMED_OUT}


# -- Controllers -------------------------------------------------------------
# A controller maps (world, raw observations of every robot) to one (v, w)
# row per robot.  Rows of finished robots are ignored by the simulator.

class PolicyController:
    """Learned policy with its frozen observation normalizer."""

    def __init__(self, policy, normalizer: RunningNormalizer, net: NetConfig,
                 deterministic: bool = True, rng: Optional[np.random.Generator] = None):
        self.policy = policy
        self.normalizer = normalizer
        self.net = net
        self.deterministic = deterministic
        self.rng = rng

    def mean_action(self, raw: Observation) -> np.ndarray:
        z = normalizer_apply(self.normalizer, raw)
        z = Observation(z.scan_stack.astype(np.float32), z.goal_polar.astype(np.float32),
                        z.velocity.astype(np.float32))
        return policy_forward(self.policy, self.net, z).astype(np.float64)

    def __call__(self, world: World, raw: Observation) -> np.ndarray:
        mean = self.mean_action(raw)
        if self.deterministic:
            return clamp_action(mean)
        action, _, _ = sample_action(mean, self.policy["log_std"].astype(np.float64), self.rng)
        return action


def go_to_goal(world: World, raw: Observation, gain: float = 2.0) -> np.ndarray:
    """Proportional go-to-goal baseline; ignores obstacles and other robots."""
    dist, angle = raw.goal_polar[:, 0], raw.goal_polar[:, 1]
    w = np.clip(gain * angle, -1.0, 1.0)
    v = np.where(np.abs(angle) > math.pi / 4, 0.0, np.minimum(1.0, dist))
    return np.stack([v, w], axis=1)


def zero_action(world: World, raw: Observation) -> np.ndarray:
    return np.zeros((world.n_robots, 2))


# -- Logs and metrics --------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    tick: int
    robot: int
    x: float
    y: float
    theta: float
    v: float
    w: float
    reward: float
    event: str


@dataclass
class TrajectoryLog:
    """Per-tick records plus what is needed to rebuild the starting worlds.

    Tick 0 holds each robot's spawn pose; tick t >= 1 holds the pose after
    the t-th command (v, w), the reward and the event of that step.
    """

    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


@dataclass
class EpisodeMetrics:
    outcome: Event
    steps: int
    arrival_time: float
    path_length: float
    cumulative_reward: float
    straight_line: float


@dataclass
class EvalSummary:
    scenario: str
    episodes: list

    def _rate(self, event):
        return sum(e.outcome == event for e in self.episodes) / len(self.episodes)

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    @property
    def success_rate(self) -> float:
        return self._rate(Event.ARRIVAL)

    @property
    def collision_rate(self) -> float:
        return self._rate(Event.COLLISION)

    @property
    def timeout_rate(self) -> float:
        return self._rate(Event.TIMEOUT)

    @property
    def mean_arrival_time(self) -> float:
        times = [e.arrival_time for e in self.episodes if e.outcome == Event.ARRIVAL]
        return float(np.mean(times)) if times else float("nan")

    @property
    def mean_reward(self) -> float:
        return float(np.mean([e.cumulative_reward for e in self.episodes]))

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "episodes": self.n_episodes,
            "success_rate": self.success_rate,
            "collision_rate": self.collision_rate,
            "timeout_rate": self.timeout_rate,
            "mean_arrival_time": self.mean_arrival_time,
            "mean_reward": self.mean_reward,
        }

    def summary_line(self) -> str:
        """One ``key=value`` line; floats use 4 decimals."""
        parts = []
        for k, v in self.as_dict().items():
            parts.append(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(parts)


# -- Evaluation --------------------------------------------------------------

def run_batch(world: World, controller, lidar: LidarSpec, horizon: int,
              reward_cfg: RewardConfig = RewardConfig(), log: Optional[TrajectoryLog] = None,
              id_offset: int = 0) -> list[EpisodeMetrics]:
    """Run every robot of ``world`` to termination without respawning.

    Finished robots stay in place (and visible to the others).  Returns one
    metrics record per robot in storage order.
    """
    n = world.n_robots
    scans = np.repeat(cast_scans(world, lidar)[:, None, :], 3, axis=1)
    start = world.pos.copy()
    straight = np.sqrt(((world.goal - world.pos) ** 2).sum(axis=1))
    path = np.zeros(n)
    ret = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    outcome = [Event.NONE] * n
    if log is not None:
        for i in range(n):
            log.records.append(TrajectoryRecord(0, id_offset + i, float(world.pos[i, 0]),
                                                float(world.pos[i, 1]), float(world.theta[i]),
                                                0.0, 0.0, 0.0, Event.NONE.name))
    tick = 0
    while np.any(world.status == Status.ACTIVE):
        tick += 1
        active = world.status == Status.ACTIVE
        raw = assemble_observations(world, scans)
        action = np.asarray(controller(world, raw), dtype=np.float64)
        nxt = world_step(world, action)
        collided = detect_collisions(nxt) & active
        reward, event = step_rewards(world, nxt, collided, reward_cfg)
        event = np.where(active & (event == Event.NONE) & (tick >= horizon), int(Event.TIMEOUT), event)
        status = nxt.status.copy()
        for i in np.flatnonzero(active):
            path[i] += math.dist(world.pos[i], nxt.pos[i])
            ret[i] += reward[i]
            steps[i] += 1
            if event[i] != Event.NONE:
                outcome[i] = Event(int(event[i]))
                status[i] = _STATUS_OF_EVENT[outcome[i]]
            if log is not None:
                log.records.append(TrajectoryRecord(
                    tick, id_offset + int(i), float(nxt.pos[i, 0]), float(nxt.pos[i, 1]),
                    float(nxt.theta[i]), float(nxt.v[i]), float(nxt.w[i]), float(reward[i]),
                    Event(int(event[i])).name))
        world = nxt.copy(status=status)
        fresh = cast_scans(world, lidar)
        scans = np.concatenate([scans[:, 1:], fresh[:, None, :]], axis=1)
    return [EpisodeMetrics(outcome[i], int(steps[i]),
                           steps[i] * world.dt if outcome[i] == Event.ARRIVAL else float("nan"),
                           float(path[i]), float(ret[i]), float(straight[i]))
            for i in range(n)]


def _resolve_checkpoint(checkpoint):
    from .train import TrainState, load_checkpoint
    if isinstance(checkpoint, TrainState):
        return checkpoint
    if isinstance(checkpoint, (str, os.PathLike)):
        return load_checkpoint(checkpoint)
    raise TypeError("checkpoint must be a TrainState or a path")


def evaluate_policy(checkpoint, scenario: ScenarioSpec, n_episodes: int, seed: int,
                    deterministic: bool = True, controller=None,
                    lidar: Optional[LidarSpec] = None, horizon: Optional[int] = None,
                    log: Optional[TrajectoryLog] = None) -> EvalSummary:
    """Evaluate a checkpoint (or an explicit controller) on fresh worlds.

    Worlds are built from ``(scenario, derive_seed(seed, b))`` for
    b = 0, 1, ... until ``n_episodes`` robot episodes are collected.
    """
    reward_cfg = RewardConfig()
    if checkpoint is not None:
        state = _resolve_checkpoint(checkpoint)
        cfg = state.config
        if lidar is not None and lidar.n_beams != cfg.lidar.n_beams:
            raise ConfigError(
                f"checkpoint expects {cfg.lidar.n_beams} beams, evaluation asked for {lidar.n_beams}")
        lidar = cfg.lidar
        horizon = horizon or cfg.horizon
        reward_cfg = cfg.reward
    lidar = lidar or LidarSpec()
    horizon = horizon or 400
    if log is not None:
        log.meta.update(scenario=scenario.id.value, n_robots=scenario.n_robots, seed=int(seed),
                        dt=scenario.dt, horizon=horizon)
    episodes = []
    b = 0
    while len(episodes) < n_episodes:
        world = build_world(scenario, derive_seed(seed, b))
        ctrl = controller
        if ctrl is None:
            ctrl = PolicyController(state.policy, state.normalizer, cfg.net, deterministic,
                                    make_rng(seed, 0x616374, b))
        episodes += run_batch(world, ctrl, lidar, horizon, reward_cfg, log,
                              id_offset=b * scenario.n_robots)
        b += 1
    if log is not None:
        log.meta["batches"] = b
    return EvalSummary(scenario.id.value, episodes[:n_episodes])


# -- Export and replay -------------------------------------------------------

def export_trajectories(log: TrajectoryLog, path: str):
    """CSV of all records (rows sorted by robot, then tick) plus a JSON sidecar."""
    rows = sorted(log.records, key=lambda r: (r.robot, r.tick))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for r in rows:
            w.writerow([r.tick, r.robot, repr(r.x), repr(r.y), repr(r.theta), repr(r.v),
                        repr(r.w), repr(r.reward), r.event])
    if log.meta:
        with open(path + ".json", "w") as fh:
            json.dump(log.meta, fh, sort_keys=True, indent=1)


def read_trajectories(path: str) -> TrajectoryLog:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header}")
        for row in reader:
            records.append(TrajectoryRecord(int(row[0]), int(row[1]), *map(float, row[2:8]), row[8]))
    meta = {}
    if os.path.exists(path + ".json"):
        with open(path + ".json") as fh:
            meta = json.load(fh)
    return TrajectoryLog(records, meta)


def replay(log: TrajectoryLog, catalog_path: Optional[str] = None) -> tuple[bool, str]:
    """Re-execute the logged commands and compare every pose bit for bit."""
    meta = log.meta
    spec = load_catalog(catalog_path)[ScenarioId(meta["scenario"])].with_robots(meta["n_robots"])
    n = spec.n_robots
    by_batch: dict[int, dict[int, list]] = {}
    for r in log.records:
        by_batch.setdefault(r.robot // n, {}).setdefault(r.tick, []).append(r)
    for b in sorted(by_batch):
        world = build_world(spec, derive_seed(meta["seed"], b))
        ticks = by_batch[b]
        for r in ticks.get(0, []):
            i = r.robot - b * n
            if (r.x, r.y, r.theta) != (world.pos[i, 0], world.pos[i, 1], world.theta[i]):
                return False, f"spawn pose of robot {r.robot} differs"
        for t in sorted(k for k in ticks if k > 0):
            rows = ticks[t]
            actions = np.zeros((n, 2))
            status = np.full(n, int(Status.ARRIVED), dtype=np.int8)
            for r in rows:
                i = r.robot - b * n
                actions[i] = (r.v, r.w)
                status[i] = Status.ACTIVE
            world = world_step(world.copy(status=status), actions)
            for r in rows:
                i = r.robot - b * n
                got = (world.pos[i, 0], world.pos[i, 1], world.theta[i])
                if got != (r.x, r.y, r.theta):
                    return False, f"robot {r.robot} tick {t}: replayed {got} != logged {(r.x, r.y, r.theta)}"
    return True, f"bit-exact: {len(log.records)} records across {len(by_batch)} world(s)"
