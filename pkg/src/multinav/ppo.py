"""Parallel multi-robot PPO: rollouts, GAE, clipped-surrogate updates, Adam."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import PPOConfig, TrainConfig
from .mdp import (Event, Observation, RunningNormalizer, assemble_observations,
                  normalizer_apply, normalizer_update, step_rewards)
from .policy import (Params, backward, gaussian_entropy, gaussian_log_prob, log_prob_backward,
                     policy_forward, sample_action, value_forward)
from .scenarios import respawn
from .sim import LidarSpec, Status, World, cast_scans, detect_collisions, world_step

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_STATUS_OF_EVENT = {
    Event.ARRIVAL: Status.ARRIVED,
    Event.COLLISION: Status.COLLIDED,
    Event.TIMEOUT: Status.TIMED_OUT,
}


class TrainingError(RuntimeError):
    """Non-finite training signal."""


# -- Adam --------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(adam: AdamState, params: Params, grads: Params, lr: float):
    """One bias-corrected Adam step; returns new (adam, params)."""
    if set(grads) != set(params):
        raise ValueError("gradient and parameter names differ")
    t = adam.step + 1
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    m, v, out = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k}")
        dtype = p.dtype
        m[k] = (ADAM_BETA1 * adam.m[k] + (1.0 - ADAM_BETA1) * g).astype(dtype)
        v[k] = (ADAM_BETA2 * adam.v[k] + (1.0 - ADAM_BETA2) * g * g).astype(dtype)
        update = lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + ADAM_EPS)
        out[k] = (p - update).astype(dtype)
    return AdamState(m, v, t), out


def clip_grad_norm(grads: Params, max_norm: float) -> tuple[Params, float]:
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        grads = {k: (g * scale).astype(g.dtype) for k, g in grads.items()}
    return grads, total


# -- Rollouts ----------------------------------------------------------------

@dataclass
class WorldSlot:
    """One world plus the per-robot bookkeeping needed to keep it running."""

    world: World
    scans: np.ndarray            # (N, 3, B) stacked scans, newest last
    episode_tick: np.ndarray     # (N,) ticks since the robot's last respawn
    episode_return: np.ndarray   # (N,) reward accumulated in the current episode
    rng: np.random.Generator

    @classmethod
    def start(cls, world: World, lidar: LidarSpec, rng: np.random.Generator) -> "WorldSlot":
        scan = cast_scans(world, lidar)
        n = world.n_robots
        return cls(world, np.repeat(scan[:, None, :], 3, axis=1), np.zeros(n, dtype=np.int64),
                   np.zeros(n), rng)


@dataclass
class EpisodeStats:
    returns: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def merge(self, other: "EpisodeStats") -> "EpisodeStats":
        return EpisodeStats(self.returns + other.returns, self.events + other.events)

    @property
    def n(self) -> int:
        return len(self.events)

    def rate(self, event: Event) -> float:
        return sum(e == event for e in self.events) / self.n if self.n else float("nan")

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns)) if self.returns else float("nan")


@dataclass
class RolloutBatch:
    """Transitions in (world, robot, tick) order.

    Each robot contributes one contiguous segment of ``rollout_length``
    ticks which may span several episodes; ``dones`` marks episode ends.
    """

    obs: np.ndarray              # (M, D) normalized, float32
    raw_obs: np.ndarray          # (M, D) before normalization
    actions: np.ndarray          # (M, 2) pre-clamp samples
    log_probs: np.ndarray        # (M,)
    rewards: np.ndarray          # (M,)
    values: np.ndarray           # (M,)
    dones: np.ndarray            # (M,) bool
    events: np.ndarray           # (M,) Event codes
    segment_lengths: np.ndarray  # (S,)
    bootstrap: np.ndarray        # (S,) value of the observation after each segment
    n_beams: int
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.rewards)

    @classmethod
    def concat(cls, parts: list["RolloutBatch"]) -> "RolloutBatch":
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(**{k: cat(k) for k in ("obs", "raw_obs", "actions", "log_probs", "rewards",
                                          "values", "dones", "events", "segment_lengths",
                                          "bootstrap")}, n_beams=parts[0].n_beams)


Controller = Callable[[World, Observation], np.ndarray]


def _act(policy, net, obs_n, rng, controller, world, raw):
    mean = policy_forward(policy, net, obs_n).astype(np.float64)
    log_std = policy["log_std"].astype(np.float64)
    if controller is None:
        action, pre, logp = sample_action(mean, log_std, rng)
    else:
        pre = np.asarray(controller(world, raw), dtype=np.float64)
        action = np.clip(pre, [0.0, -1.0], [1.0, 1.0])
        logp = gaussian_log_prob(mean, log_std, pre)
    return action, pre, logp


def rollout_world(slot: WorldSlot, policy: Params, value: Params, normalizer: RunningNormalizer,
                  cfg: TrainConfig, controller: Optional[Controller] = None):
    """Run one world for ``rollout_length`` ticks; returns (batch, slot, stats).

    Finished robots are respawned at once, so every robot yields exactly
    one transition per tick.
    """
    T = cfg.ppo.rollout_length
    net, lidar, rcfg = cfg.net, cfg.lidar, cfg.reward
    world, scans = slot.world, slot.scans.copy()
    ep_tick, ep_ret = slot.episode_tick.copy(), slot.episode_return.copy()
    rng = slot.rng
    n = world.n_robots
    dim = 3 * lidar.n_beams + 4
    raw_buf = np.empty((T, n, dim))
    obs_buf = np.empty((T, n, dim), dtype=np.float32)
    act_buf = np.empty((T, n, 2))
    logp_buf = np.empty((T, n))
    rew_buf = np.empty((T, n))
    val_buf = np.empty((T, n))
    done_buf = np.zeros((T, n), dtype=bool)
    ev_buf = np.zeros((T, n), dtype=np.int8)
    stats = EpisodeStats()

    for t in range(T):
        raw = assemble_observations(world, scans)
        obs_n = normalizer_apply(normalizer, raw)
        obs_n = Observation(obs_n.scan_stack.astype(np.float32), obs_n.goal_polar.astype(np.float32),
                            obs_n.velocity.astype(np.float32))
        action, pre, logp = _act(policy, net, obs_n, rng, controller, world, raw)
        val_buf[t] = value_forward(value, net, obs_n)
        raw_buf[t] = raw.flat()
        obs_buf[t] = obs_n.flat()
        act_buf[t] = pre
        logp_buf[t] = logp

        nxt = world_step(world, action)
        collided = detect_collisions(nxt)
        reward, event = step_rewards(world, nxt, collided, rcfg)
        ep_tick += 1
        event = np.where((event == Event.NONE) & (ep_tick >= cfg.horizon), int(Event.TIMEOUT), event)
        rew_buf[t] = reward
        ev_buf[t] = event
        done = event != Event.NONE
        done_buf[t] = done
        ep_ret += reward

        status = nxt.status.copy()
        for i in np.flatnonzero(done):
            status[i] = _STATUS_OF_EVENT[Event(int(event[i]))]
        world = nxt.copy(status=status)
        for i in np.flatnonzero(done):
            stats.returns.append(float(ep_ret[i]))
            stats.events.append(Event(int(event[i])))
            world = respawn(world, int(i), rng)
            ep_tick[i] = 0
            ep_ret[i] = 0.0
        fresh = cast_scans(world, lidar)
        scans = np.concatenate([scans[:, 1:], fresh[:, None, :]], axis=1)
        scans[done] = fresh[done][:, None, :]

    # Value of the observation following each robot's last transition.
    raw = assemble_observations(world, scans)
    obs_n = normalizer_apply(normalizer, raw)
    obs_n = Observation(obs_n.scan_stack.astype(np.float32), obs_n.goal_polar.astype(np.float32),
                        obs_n.velocity.astype(np.float32))
    bootstrap = value_forward(value, net, obs_n).astype(np.float64)

    def robot_major(a):
        return np.ascontiguousarray(np.swapaxes(a, 0, 1)).reshape(n * T, *a.shape[2:])

    batch = RolloutBatch(
        obs=robot_major(obs_buf), raw_obs=robot_major(raw_buf), actions=robot_major(act_buf),
        log_probs=robot_major(logp_buf), rewards=robot_major(rew_buf),
        values=robot_major(val_buf), dones=robot_major(done_buf), events=robot_major(ev_buf),
        segment_lengths=np.full(n, T, dtype=np.int64), bootstrap=bootstrap,
        n_beams=lidar.n_beams,
    )
    return batch, WorldSlot(world, scans, ep_tick, ep_ret, rng), stats


def _rollout_job(args):
    return rollout_world(*args)


def collect_rollouts(slots: list[WorldSlot], policy: Params, value: Params,
                     normalizer: RunningNormalizer, cfg: TrainConfig, pool=None,
                     controller: Optional[Controller] = None):
    """Step every world with the current policy and pool their transitions.

    With a ``multiprocessing`` pool the worlds run in separate processes;
    each world carries its own RNG stream, so the result is identical to
    sequential collection.
    """
    jobs = [(s, policy, value, normalizer, cfg, controller) for s in slots]
    results = pool.map(_rollout_job, jobs) if pool is not None else [rollout_world(*j) for j in jobs]
    batch = RolloutBatch.concat([r[0] for r in results])
    stats = EpisodeStats()
    for r in results:
        stats = stats.merge(r[2])
    return batch, [r[1] for r in results], stats


# -- Advantages --------------------------------------------------------------

def gae(rewards, values, dones, bootstrap: float, gamma: float, lam: float):
    """Generalized advantage estimates and returns for one trajectory segment."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    adv = np.zeros(n)
    next_value, next_adv = float(bootstrap), 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * notdone[t] - values[t]
        next_adv = delta + gamma * lam * notdone[t] * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / (std if std > 0 else 1.0)


def compute_gae(batch: RolloutBatch, bootstrap_values=None, cfg: PPOConfig = PPOConfig(),
                normalize: bool = True) -> RolloutBatch:
    boot = batch.bootstrap if bootstrap_values is None else np.asarray(bootstrap_values)
    adv = np.empty(len(batch))
    ret = np.empty(len(batch))
    start = 0
    for seg, length in enumerate(batch.segment_lengths):
        sl = slice(start, start + int(length))
        adv[sl], ret[sl] = gae(batch.rewards[sl], batch.values[sl], batch.dones[sl], boot[seg],
                               cfg.gamma, cfg.lam)
        start += int(length)
    batch.advantages = normalize_advantages(adv) if normalize else adv
    batch.returns = ret
    return batch


# -- Update ------------------------------------------------------------------

def clipped_objective(ratio, adv, eps):
    """Per-sample min(rho*A, clip(rho, 1-eps, 1+eps)*A)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def policy_loss_and_grad(policy: Params, net, obs: Observation, actions, old_logp, adv,
                         clip_epsilon: float, entropy_coeff: float, with_grad: bool = True):
    cache = {} if with_grad else None
    mean = policy_forward(policy, net, obs, cache)
    mean64 = mean.astype(np.float64)
    log_std = policy["log_std"].astype(np.float64)
    logp = gaussian_log_prob(mean64, log_std, actions)
    ratio = np.exp(logp - old_logp)
    obj = clipped_objective(ratio, adv, clip_epsilon)
    entropy = gaussian_entropy(log_std)
    loss = -float(obj.mean()) - entropy_coeff * entropy
    info = {"policy_loss": loss, "entropy": entropy,
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_epsilon)),
            "approx_kl": float(np.mean(old_logp - logp))}
    if not with_grad:
        return loss, None, info
    m = len(adv)
    unclipped = ratio * adv <= np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv
    g_logp = -(ratio * adv * unclipped) / m
    g_mean, g_log_std = log_prob_backward(mean64, log_std, actions, g_logp)
    g_log_std = g_log_std - entropy_coeff
    return loss, backward(policy, net, cache, g_mean, g_log_std), info


def value_loss_and_grad(value: Params, net, obs: Observation, returns, with_grad: bool = True):
    cache = {} if with_grad else None
    pred = value_forward(value, net, obs, cache).astype(np.float64)
    err = pred - returns
    loss = float(np.mean(err * err))
    if not with_grad:
        return loss, None
    return loss, backward(value, net, cache, 2.0 * err / len(err))


@dataclass
class Learner:
    """Everything the optimizer updates."""

    policy: Params
    value: Params
    adam_policy: AdamState
    adam_value: AdamState
    rng: np.random.Generator


def ppo_update(learner: Learner, batch: RolloutBatch, cfg: TrainConfig) -> tuple[Learner, dict]:
    if batch.advantages is None:
        raise ValueError("batch has no advantages; run compute_gae first")
    pcfg = cfg.ppo
    policy, value = learner.policy, learner.value
    adam_p, adam_v = learner.adam_policy, learner.adam_value
    m = len(batch)
    stats = {"policy_loss": [], "value_loss": [], "approx_kl": [], "clip_fraction": []}
    for _ in range(pcfg.epochs):
        perm = learner.rng.permutation(m)
        for start in range(0, m, pcfg.minibatch_size):
            idx = perm[start:start + pcfg.minibatch_size]
            obs = Observation.from_flat(batch.obs[idx], batch.n_beams)
            p_loss, p_grad, info = policy_loss_and_grad(
                policy, cfg.net, obs, batch.actions[idx], batch.log_probs[idx],
                batch.advantages[idx], pcfg.clip_epsilon, pcfg.entropy_coeff)
            v_loss, v_grad = value_loss_and_grad(value, cfg.net, obs, batch.returns[idx])
            if not (math.isfinite(p_loss) and math.isfinite(v_loss)):
                raise TrainingError(
                    f"non-finite loss (policy={p_loss}, value={v_loss}) at minibatch starting {start}")
            p_grad, _ = clip_grad_norm(p_grad, pcfg.grad_norm_clip)
            v_grad, _ = clip_grad_norm(v_grad, pcfg.grad_norm_clip)
            adam_p, policy = adam_step(adam_p, policy, p_grad, pcfg.lr_policy)
            adam_v, value = adam_step(adam_v, value, v_grad, pcfg.lr_value)
            stats["policy_loss"].append(p_loss)
            stats["value_loss"].append(v_loss)
            stats["approx_kl"].append(info["approx_kl"])
            stats["clip_fraction"].append(info["clip_fraction"])
    for k, p in policy.items():
        if not np.all(np.isfinite(p)):
            raise TrainingError(f"parameter {k} became non-finite")
    summary = {k: float(np.mean(v)) if v else float("nan") for k, v in stats.items()}
    return Learner(policy, value, adam_p, adam_v, learner.rng), summary


def surrogate_loss(policy: Params, batch: RolloutBatch, cfg: TrainConfig) -> float:
    """Clipped surrogate policy loss over the whole batch, no update."""
    obs = Observation.from_flat(batch.obs, batch.n_beams)
    loss, _, _ = policy_loss_and_grad(policy, cfg.net, obs, batch.actions, batch.log_probs,
                                      batch.advantages, cfg.ppo.clip_epsilon,
                                      cfg.ppo.entropy_coeff, with_grad=False)
    return loss
