"""Training configuration: profiles, YAML loading, overrides and digest.

The file format is YAML.  Key schema (all keys optional, unknown keys are
rejected):

    profile: paper | desk          base profile the remaining keys override
    seed: int                      master seed
    horizon: int                   episode timeout in ticks
    workers: int                   rollout processes (1 = in-process, sequential)
    checkpoint_every: int          iterations between periodic checkpoints (0 = off)
    output_dir: str
    scenario_catalog: str | null   path to a scenario catalog (null = packaged)
    lidar:      {n_beams, fov, max_range}
    net:        {conv1: [filters, kernel, stride], conv2: [...], fc1, fc2}
    ppo:        {gamma, lam, clip_epsilon, epochs, minibatch_size, lr_policy,
                 lr_value, grad_norm_clip, rollout_length, entropy_coeff}
    reward:     {r_arrival, omega_g, r_collision, omega_w, arrival_threshold, w_threshold}
    stage_one:  {scenario_id: n_robots, ...}
    stage_two:  {scenario_id: n_robots, ...}
    curriculum: {enabled, success_window, success_threshold,
                 max_stage1_iterations, total_iterations}
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .mdp import RewardConfig
from .policy import NetConfig
from .sim import LidarSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_epsilon: float = 0.2
    epochs: int = 4
    minibatch_size: int = 1024
    lr_policy: float = 3e-4
    lr_value: float = 3e-4
    grad_norm_clip: float = 5.0
    rollout_length: int = 256
    entropy_coeff: float = 0.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ConfigError("lambda must lie in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ConfigError("clip_epsilon must be positive")
        if self.epochs < 0 or self.minibatch_size < 1 or self.rollout_length < 1:
            raise ConfigError("epochs, minibatch_size and rollout_length must be sensible counts")


@dataclass(frozen=True)
class CurriculumConfig:
    enabled: bool = True
    success_window: int = 20
    success_threshold: float = 0.9
    max_stage1_iterations: int = 1000
    total_iterations: int = 3000


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    profile: str = "paper"
    horizon: int = 400
    workers: int = 1
    checkpoint_every: int = 50
    output_dir: str = "runs/default"
    scenario_catalog: Optional[str] = None
    lidar: LidarSpec = field(default_factory=LidarSpec)
    net: NetConfig = field(default_factory=NetConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    stage_one: dict = field(default_factory=lambda: {"random_empty": 20})
    stage_two: dict = field(default_factory=lambda: {
        "circle": 12, "corridor": 6, "crossing": 8, "swap": 6,
        "random_empty": 8, "random_obstacles": 10, "evacuation": 8,
    })
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)

    def __post_init__(self):
        if self.net.n_beams != self.lidar.n_beams:
            raise ConfigError(
                f"net.n_beams={self.net.n_beams} differs from lidar.n_beams={self.lidar.n_beams}")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.horizon < 1 or self.workers < 1:
            raise ConfigError("horizon and workers must be positive")

    @property
    def paper_counts(self) -> bool:
        return self.profile == "paper"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["net"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d["net"].items()
                    if k != "n_beams" and k != "n_actions"}
        return d

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form of every result-affecting key."""
        d = self.to_dict()
        for k in ("output_dir", "workers", "checkpoint_every"):
            d.pop(k)
        return hashlib.sha256(canonical_json(d).encode()).digest()

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def canonical_json(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


DESK_OVERRIDES: dict[str, Any] = {
    "profile": "desk",
    "horizon": 400,
    "checkpoint_every": 25,
    "lidar": {"n_beams": 128},
    "ppo": {"rollout_length": 256, "minibatch_size": 256, "epochs": 8,
            "lr_policy": 5e-4, "lr_value": 1e-3},
    "stage_one": {"random_empty": 4},
    "stage_two": {"circle": 3, "swap": 2, "random_obstacles": 3},
    "curriculum": {"max_stage1_iterations": 150, "total_iterations": 300},
}

PROFILES = {"paper": {}, "desk": DESK_OVERRIDES}

_SECTIONS = {
    "lidar": LidarSpec,
    "ppo": PPOConfig,
    "reward": RewardConfig,
    "curriculum": CurriculumConfig,
}
_TOP_KEYS = {"seed", "profile", "horizon", "workers", "checkpoint_every", "output_dir",
             "scenario_catalog", "lidar", "net", "ppo", "reward", "stage_one", "stage_two",
             "curriculum"}
_NET_KEYS = {"conv1", "conv2", "fc1", "fc2"}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("stage_one", "stage_two"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _check_keys(raw: dict):
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name, cls in _SECTIONS.items():
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            allowed = {f.name for f in dataclasses.fields(cls)}
            bad = set(raw[name]) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name}: {sorted(bad)}")
    if "net" in raw:
        bad = set(raw["net"]) - _NET_KEYS
        if bad:
            raise ConfigError(f"unknown keys in net: {sorted(bad)}")


def from_dict(raw: dict) -> TrainConfig:
    """Build a validated config: profile defaults first, then ``raw`` on top."""
    raw = dict(raw or {})
    _check_keys(raw)
    profile = raw.get("profile", "paper")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    _check_keys(PROFILES[profile])
    merged = _merge(PROFILES[profile], raw)
    try:
        lidar = LidarSpec(**merged.get("lidar", {}))
        net_kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in merged.get("net", {}).items()}
        kwargs = dict(
            lidar=lidar,
            net=NetConfig(n_beams=lidar.n_beams, **net_kw),
            ppo=PPOConfig(**merged.get("ppo", {})),
            reward=RewardConfig(**merged.get("reward", {})),
            curriculum=CurriculumConfig(**merged.get("curriculum", {})),
        )
        for k in ("seed", "profile", "horizon", "workers", "checkpoint_every", "output_dir",
                  "scenario_catalog", "stage_one", "stage_two"):
            if k in merged:
                kwargs[k] = merged[k]
        return TrainConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str] = None, **overrides) -> TrainConfig:
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return from_dict(raw)


def desk_config(**overrides) -> TrainConfig:
    return from_dict({"profile": "desk", **overrides})


def save_config(cfg: TrainConfig, path: str):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
