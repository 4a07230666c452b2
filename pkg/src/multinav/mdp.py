"""Observation assembly, running normalization, reward and termination."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .sim import RobotState, World, wrap_angle

N_FRAMES = 3
CLAMP = 5.0
STD_FLOOR = 1e-8


class Event(enum.IntEnum):
    NONE = 0
    ARRIVAL = 1
    COLLISION = 2
    TIMEOUT = 3


@dataclass(frozen=True)
class RewardConfig:
    r_arrival: float = 15.0
    omega_g: float = 2.5
    r_collision: float = -15.0
    omega_w: float = -0.1
    arrival_threshold: float = 0.1
    w_threshold: float = 0.7

    def __post_init__(self):
        if self.arrival_threshold <= 0 or self.w_threshold <= 0:
            raise ValueError("reward thresholds must be positive")


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    terminal: bool
    event: Event


@dataclass
class Observation:
    """Stacked scans, polar goal and velocity.

    Fields may carry a leading batch dimension: ``scan_stack`` is
    ``(..., 3, B)``, ``goal_polar`` and ``velocity`` are ``(..., 2)``.
    """

    scan_stack: np.ndarray
    goal_polar: np.ndarray
    velocity: np.ndarray

    @property
    def n_beams(self) -> int:
        return self.scan_stack.shape[-1]

    def flat(self) -> np.ndarray:
        lead = self.scan_stack.shape[:-2]
        scans = self.scan_stack.reshape(*lead, -1)
        return np.concatenate([scans, self.goal_polar, self.velocity], axis=-1)

    @classmethod
    def from_flat(cls, x: np.ndarray, n_beams: int) -> "Observation":
        x = np.asarray(x)
        lead = x.shape[:-1]
        k = N_FRAMES * n_beams
        return cls(x[..., :k].reshape(*lead, N_FRAMES, n_beams), x[..., k:k + 2], x[..., k + 2:k + 4])

    def __getitem__(self, idx) -> "Observation":
        return Observation(self.scan_stack[idx], self.goal_polar[idx], self.velocity[idx])

    def __len__(self):
        return len(self.scan_stack)


def goal_polar(pos: np.ndarray, theta: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """(distance, bearing) of the goal in each robot's frame, shape (N, 2)."""
    delta = goal - pos
    dist = np.sqrt(delta[:, 0] ** 2 + delta[:, 1] ** 2)
    angle = wrap_angle(np.arctan2(delta[:, 1], delta[:, 0]) - theta)
    return np.stack([dist, np.atleast_1d(angle)], axis=1)


def stack_history(scan_history) -> np.ndarray:
    """Pad a history of 1..3 scans (oldest first) to exactly three frames."""
    frames = [np.asarray(s, dtype=np.float64) for s in scan_history][-N_FRAMES:]
    if not frames:
        raise ValueError("scan history is empty")
    while len(frames) < N_FRAMES:
        frames.insert(0, frames[0])
    return np.stack(frames)


def assemble_observation(world: World, robot_index: int, scan_history) -> Observation:
    i = robot_index
    polar = goal_polar(world.pos[i:i + 1], world.theta[i:i + 1], world.goal[i:i + 1])[0]
    return Observation(
        scan_stack=stack_history(scan_history),
        goal_polar=polar,
        velocity=np.array([world.v[i], world.w[i]]),
    )


def assemble_observations(world: World, scan_stacks: np.ndarray) -> Observation:
    """Batched observation for every robot given their (N, 3, B) scan stacks."""
    return Observation(
        scan_stack=scan_stacks,
        goal_polar=goal_polar(world.pos, world.theta, world.goal),
        velocity=np.stack([world.v, world.w], axis=1),
    )


@dataclass(frozen=True)
class RunningNormalizer:
    """Streaming per-dimension mean and variance (population)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> "RunningNormalizer":
        return cls(0, np.zeros(dim), np.zeros(dim))

    @property
    def var(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.mean)
        return self.m2 / self.count

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def normalizer_update(n: RunningNormalizer, obs_batch) -> RunningNormalizer:
    """Merge a batch into the running statistics (Chan et al. pairwise update)."""
    x = obs_batch.flat() if isinstance(obs_batch, Observation) else np.asarray(obs_batch)
    x = np.asarray(x, dtype=np.float64).reshape(-1, n.mean.shape[0])
    m = x.shape[0]
    if m == 0:
        return n
    b_mean = x.mean(axis=0)
    b_m2 = ((x - b_mean) ** 2).sum(axis=0)
    total = n.count + m
    delta = b_mean - n.mean
    mean = n.mean + delta * (m / total)
    m2 = n.m2 + b_m2 + delta ** 2 * (n.count * m / total)
    return RunningNormalizer(total, mean, m2)


def normalizer_apply(n: RunningNormalizer, obs):
    """Standardize and clamp to [-5, 5]; identity while no data has been seen."""
    is_obs = isinstance(obs, Observation)
    x = obs.flat() if is_obs else np.asarray(obs, dtype=np.float64)
    if n.count == 0:
        z = x
    else:
        z = np.clip((x - n.mean) / np.maximum(n.std, STD_FLOOR), -CLAMP, CLAMP)
    return Observation.from_flat(z, obs.n_beams) if is_obs else z


def reward_terms(prev_dist, curr_dist, w, collided, cfg: RewardConfig = RewardConfig()):
    """The goal, collision and rotation terms, element-wise over arrays."""
    prev_dist = np.asarray(prev_dist, dtype=np.float64)
    curr_dist = np.asarray(curr_dist, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    collided = np.asarray(collided, dtype=bool)
    arrived = curr_dist < cfg.arrival_threshold
    gr = np.where(arrived, cfg.r_arrival, cfg.omega_g * (prev_dist - curr_dist))
    cr = np.where(collided, cfg.r_collision, 0.0)
    wr = np.where(np.abs(w) > cfg.w_threshold, cfg.omega_w * np.abs(w), 0.0)
    return gr, cr, wr


def step_rewards(prev: World, curr: World, collided, cfg: RewardConfig = RewardConfig()):
    """Rewards and events for every robot across one tick, arrays of shape (N,)."""
    prev_dist = np.sqrt(((prev.pos - prev.goal) ** 2).sum(axis=1))
    curr_dist = np.sqrt(((curr.pos - curr.goal) ** 2).sum(axis=1))
    gr, cr, wr = reward_terms(prev_dist, curr_dist, curr.w, collided, cfg)
    event = np.where(collided, int(Event.COLLISION),
                     np.where(curr_dist < cfg.arrival_threshold, int(Event.ARRIVAL), int(Event.NONE)))
    return gr + cr + wr, event


def _dist_to_goal(r: RobotState) -> float:
    return float(np.sqrt((r.pose.x - r.goal[0]) ** 2 + (r.pose.y - r.goal[1]) ** 2))


def compute_reward(prev: RobotState, curr: RobotState, collided: bool,
                   cfg: RewardConfig = RewardConfig()) -> tuple[float, Event]:
    gr, cr, wr = reward_terms(_dist_to_goal(prev), _dist_to_goal(curr), curr.w, collided, cfg)
    if collided:
        event = Event.COLLISION
    elif _dist_to_goal(curr) < cfg.arrival_threshold:
        event = Event.ARRIVAL
    else:
        event = Event.NONE
    return float(gr + cr + wr), event


def check_termination(robot: RobotState, tick_in_episode: int, horizon: int,
                      collided: bool = False, arrival_threshold: float = 0.1) -> Event:
    if collided:
        return Event.COLLISION
    if _dist_to_goal(robot) < arrival_threshold:
        return Event.ARRIVAL
    if tick_in_episode >= horizon:
        return Event.TIMEOUT
    return Event.NONE


def step_outcome(prev: RobotState, curr: RobotState, collided: bool, tick_in_episode: int,
                 horizon: int, cfg: RewardConfig = RewardConfig()) -> StepOutcome:
    reward, _ = compute_reward(prev, curr, collided, cfg)
    event = check_termination(curr, tick_in_episode, horizon, collided, cfg.arrival_threshold)
    return StepOutcome(reward, event != Event.NONE, event)

