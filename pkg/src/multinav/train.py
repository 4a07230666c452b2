"""Training state, the two-stage curriculum and checkpoint (de)serialization."""
from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import checkpoint as ckpt
from .config import TrainConfig, canonical_json, from_dict, save_config
from .mdp import RunningNormalizer, normalizer_update
from .policy import Params, init_params
from .ppo import (AdamState, Learner, TrainingError, WorldSlot, collect_rollouts, compute_gae,
                  ppo_update)
from .scenarios import Stage, StageSpec, load_catalog, ScenarioId, build_world
from .seeding import derive_seed, make_rng, rng_from_words, rng_to_words
from .sim import World

log = logging.getLogger(__name__)

CURVE_HEADER = ["iteration", "wall_seconds", "mean_episode_reward", "success_rate",
                "collision_rate"]

# Seed-derivation keys.
_K_INIT, _K_WORLD, _K_SLOT_RNG, _K_UPDATE = 1, 2, 3, 4


@dataclass
class TrainState:
    config: TrainConfig
    policy: Params
    value: Params
    adam_policy: AdamState
    adam_value: AdamState
    normalizer: RunningNormalizer
    stage: Stage
    iteration: int
    stage_iteration: int
    slots: list
    update_rng: np.random.Generator
    history: list = field(default_factory=list)   # dict rows, see CURVE_HEADER (+ "stage")
    wall_seconds: float = 0.0

    @property
    def seed(self) -> int:
        return self.config.seed

    def reward_curve(self) -> np.ndarray:
        """(iteration, mean_episode_reward, success_rate, collision_rate) per row.

        Wall time is left out on purpose: it is the only non-reproducible
        column of the CSV.
        """
        return np.array([[r["iteration"], r["mean_episode_reward"], r["success_rate"],
                          r["collision_rate"]] for r in self.history]).reshape(-1, 4)


def stage_spec(cfg: TrainConfig, stage: Stage) -> StageSpec:
    catalog = load_catalog(cfg.scenario_catalog)
    alloc = cfg.stage_one if Stage(stage) == Stage.ONE else cfg.stage_two
    specs = tuple(catalog[ScenarioId(sid)].with_robots(n) for sid, n in alloc.items())
    return StageSpec(Stage(stage), specs, enforce_paper_counts=cfg.paper_counts)


def stage_slots(cfg: TrainConfig, stage: Stage) -> list[WorldSlot]:
    spec = stage_spec(cfg, stage)
    slots = []
    for k, sc in enumerate(spec.scenarios):
        world = build_world(sc, derive_seed(cfg.seed, _K_WORLD, int(stage), k))
        slots.append(WorldSlot.start(world, cfg.lidar, make_rng(cfg.seed, _K_SLOT_RNG, int(stage), k)))
    return slots


def init_train_state(cfg: TrainConfig) -> TrainState:
    policy, value = init_params(cfg.net, derive_seed(cfg.seed, _K_INIT))
    stage = Stage.ONE if cfg.curriculum.enabled else Stage.TWO
    return TrainState(
        config=cfg, policy=policy, value=value,
        adam_policy=AdamState.zeros_like(policy), adam_value=AdamState.zeros_like(value),
        normalizer=RunningNormalizer.empty(3 * cfg.lidar.n_beams + 4),
        stage=stage, iteration=0, stage_iteration=0,
        slots=stage_slots(cfg, stage), update_rng=make_rng(cfg.seed, _K_UPDATE),
    )


def train_iteration(state: TrainState, pool=None) -> dict:
    """Collect, update the normalizer, optimize; mutates ``state`` in place."""
    cfg = state.config
    t0 = time.perf_counter()
    batch, slots, ep = collect_rollouts(state.slots, state.policy, state.value, state.normalizer,
                                        cfg, pool=pool)
    compute_gae(batch, cfg=cfg.ppo)
    if not np.all(np.isfinite(batch.rewards)) or not np.all(np.isfinite(batch.advantages)):
        raise TrainingError(f"non-finite rollout data at iteration {state.iteration}")
    normalizer = normalizer_update(state.normalizer, batch.raw_obs)
    learner = Learner(state.policy, state.value, state.adam_policy, state.adam_value,
                      state.update_rng)
    learner, losses = ppo_update(learner, batch, cfg)

    state.policy, state.value = learner.policy, learner.value
    state.adam_policy, state.adam_value = learner.adam_policy, learner.adam_value
    state.normalizer, state.slots = normalizer, slots
    state.wall_seconds += time.perf_counter() - t0
    row = {
        "iteration": state.iteration,
        "wall_seconds": state.wall_seconds,
        "mean_episode_reward": ep.mean_return,
        "success_rate": ep.rate(1),
        "collision_rate": ep.rate(2),
        "stage": int(state.stage),
        "episodes": ep.n,
        **losses,
    }
    state.history.append(row)
    state.iteration += 1
    state.stage_iteration += 1
    return row


def stage_one_done(state: TrainState) -> bool:
    """Moving-average success over the window, or the iteration cap."""
    cur = state.config.curriculum
    if state.stage_iteration >= cur.max_stage1_iterations:
        return True
    rows = [r for r in state.history if r["stage"] == Stage.ONE][-cur.success_window:]
    if len(rows) < cur.success_window:
        return False
    rates = [0.0 if math.isnan(r["success_rate"]) else r["success_rate"] for r in rows]
    return float(np.mean(rates)) >= cur.success_threshold


def advance_to_stage_two(state: TrainState):
    state.stage = Stage.TWO
    state.stage_iteration = 0
    state.slots = stage_slots(state.config, Stage.TWO)


@contextlib.contextmanager
def rollout_pool(workers: int):
    if workers <= 1:
        yield None
        return
    ctx = multiprocessing.get_context("fork" if hasattr(os, "fork") else "spawn")
    with ctx.Pool(workers) as pool:
        yield pool


def run_curriculum(cfg: TrainConfig, state: Optional[TrainState] = None,
                   out_dir: Optional[str] = None, max_iterations: Optional[int] = None,
                   stop_after_stage_one: bool = False,
                   callback: Optional[Callable[[TrainState, dict], None]] = None) -> TrainState:
    """Train until ``curriculum.total_iterations`` (or ``max_iterations``).

    With the curriculum enabled, Stage One runs on its obstacle-free
    population until :func:`stage_one_done`; the policy is checkpointed and
    training continues on the Stage Two population.  ``out_dir`` receives
    the effective config, periodic checkpoints and the reward-curve CSV.
    """
    state = state or init_train_state(cfg)
    total = cfg.curriculum.total_iterations if max_iterations is None else max_iterations
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_config(cfg, os.path.join(out_dir, "effective_config.yaml"))
    with rollout_pool(cfg.workers) as pool:
        while state.iteration < total:
            row = train_iteration(state, pool)
            log.info("iter %d stage %d reward %.3f success %.3f", row["iteration"], row["stage"],
                     row["mean_episode_reward"], row["success_rate"])
            if callback:
                callback(state, row)
            if out_dir and cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
                save_checkpoint(state, os.path.join(out_dir, "latest.ckpt"))
                write_curve(state, os.path.join(out_dir, "reward_curve.csv"))
            if state.stage == Stage.ONE and stage_one_done(state):
                if out_dir:
                    save_checkpoint(state, os.path.join(out_dir, "stage1.ckpt"))
                if stop_after_stage_one:
                    break
                advance_to_stage_two(state)
    if out_dir:
        save_checkpoint(state, os.path.join(out_dir, "final.ckpt"))
        write_curve(state, os.path.join(out_dir, "reward_curve.csv"))
    return state


def write_curve(state: TrainState, path: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for r in state.history:
            w.writerow([r["iteration"], repr(r["wall_seconds"]), repr(r["mean_episode_reward"]),
                        repr(r["success_rate"]), repr(r["collision_rate"])])


def read_curve(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "iteration" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


# -- Checkpoints -------------------------------------------------------------

_HISTORY_KEYS = ["iteration", "wall_seconds", "mean_episode_reward", "success_rate",
                 "collision_rate", "stage", "episodes", "policy_loss", "value_loss",
                 "approx_kl", "clip_fraction"]


def state_tensors(state: TrainState) -> dict:
    t = {"config": ckpt.encode_text(canonical_json(state.config.to_dict()))}
    for k, p in state.policy.items():
        t[f"policy.{k}"] = p
    for k, p in state.value.items():
        t[f"value.{k}"] = p
    for tag, adam in (("adam_policy", state.adam_policy), ("adam_value", state.adam_value)):
        t[f"{tag}.step"] = np.array([adam.step], dtype=np.int64)
        for k in adam.m:
            t[f"{tag}.m.{k}"] = adam.m[k]
            t[f"{tag}.v.{k}"] = adam.v[k]
    n = state.normalizer
    t["normalizer.count"] = np.array([n.count], dtype=np.int64)
    t["normalizer.mean"] = n.mean
    t["normalizer.m2"] = n.m2
    t["train.counters"] = np.array([int(state.stage), state.iteration, state.stage_iteration],
                                   dtype=np.int64)
    t["train.wall_seconds"] = np.array([state.wall_seconds])
    t["train.update_rng"] = rng_to_words(state.update_rng)
    t["train.history"] = np.array([[float(r[k]) for k in _HISTORY_KEYS] for r in state.history],
                                  dtype=np.float64).reshape(-1, len(_HISTORY_KEYS))
    t["train.n_slots"] = np.array([len(state.slots)], dtype=np.int64)
    for k, s in enumerate(state.slots):
        w = s.world
        p = f"slot{k}."
        t[p + "pos"], t[p + "theta"], t[p + "v"], t[p + "w"] = w.pos, w.theta, w.v, w.w
        t[p + "radius"], t[p + "goal"], t[p + "status"] = w.radius, w.goal, w.status
        t[p + "obstacles"], t[p + "ids"] = w.obstacles, w.ids
        t[p + "world_meta"] = np.array([*w.bounds, w.dt])
        t[p + "tick"] = np.array([w.tick], dtype=np.int64)
        t[p + "scans"] = s.scans
        t[p + "episode_tick"] = s.episode_tick
        t[p + "episode_return"] = s.episode_return
        t[p + "rng"] = rng_to_words(s.rng)
    return t


def save_checkpoint(state: TrainState, path: str):
    ckpt.write(path, state_tensors(state), state.config.digest())


def load_checkpoint(path: str) -> TrainState:
    tensors, digest = ckpt.read(path)
    return state_from_tensors(tensors, digest)


def state_from_tensors(t: dict, digest: bytes) -> TrainState:
    try:
        cfg = from_dict(json.loads(ckpt.decode_text(t["config"])))
    except (KeyError, ValueError) as exc:
        raise ckpt.DigestError(f"embedded config unreadable: {exc}") from exc
    if cfg.digest() != digest:
        raise ckpt.DigestError("config digest mismatch: checkpoint config was altered")

    def group(prefix):
        return {k[len(prefix):]: v for k, v in t.items() if k.startswith(prefix)}

    policy, value = group("policy."), group("value.")
    adams = []
    for tag in ("adam_policy", "adam_value"):
        adams.append(AdamState(group(f"{tag}.m."), group(f"{tag}.v."), int(t[f"{tag}.step"][0])))
    normalizer = RunningNormalizer(int(t["normalizer.count"][0]), t["normalizer.mean"],
                                   t["normalizer.m2"])
    stage, iteration, stage_iteration = (int(x) for x in t["train.counters"])
    history = [{k: (int(v) if k in ("iteration", "stage", "episodes") else float(v))
                for k, v in zip(_HISTORY_KEYS, row)} for row in t["train.history"]]
    spec = stage_spec(cfg, Stage(stage))
    slots = []
    for k in range(int(t["train.n_slots"][0])):
        p = f"slot{k}."
        meta = t[p + "world_meta"]
        world = World(
            pos=t[p + "pos"], theta=t[p + "theta"], v=t[p + "v"], w=t[p + "w"],
            radius=t[p + "radius"], goal=t[p + "goal"], status=t[p + "status"],
            obstacles=t[p + "obstacles"], bounds=tuple(float(b) for b in meta[:4]),
            dt=float(meta[4]), tick=int(t[p + "tick"][0]), ids=t[p + "ids"],
            scenario=spec.scenarios[k],
        )
        slots.append(WorldSlot(world, t[p + "scans"], t[p + "episode_tick"],
                               t[p + "episode_return"], rng_from_words(t[p + "rng"])))
    return TrainState(
        config=cfg, policy=policy, value=value, adam_policy=adams[0], adam_value=adams[1],
        normalizer=normalizer, stage=Stage(stage), iteration=iteration,
        stage_iteration=stage_iteration, slots=slots,
        update_rng=rng_from_words(t["train.update_rng"]), history=history,
        wall_seconds=float(t["train.wall_seconds"][0]),
    )
