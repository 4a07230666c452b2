"""Observations, the running normalizer and the three-term reward."""
# %%
import math

import numpy as np

from multinav.mdp import (RewardConfig, RunningNormalizer, assemble_observation,
                          check_termination, compute_reward, normalizer_apply, normalizer_update,
                          reward_terms)
from multinav.sim import LidarSpec, Pose, RobotState, cast_scan, make_world

robot = RobotState(Pose(0.0, 0.0, 0.0), 0.3, 0.1, 0.12, goal=(0.0, 1.0))
world = make_world([robot])
scan = cast_scan(world, 0, LidarSpec(n_beams=16))

# A fresh episode replicates the first scan into all three frames.
obs = assemble_observation(world, 0, [scan])
print("stack", obs.scan_stack.shape, "goal (dist, bearing)", obs.goal_polar, "vel", obs.velocity)

# %%
# Reward: progress (or the arrival bonus), collision penalty, fast-turn penalty.
cfg = RewardConfig()
cases = {
    "arrive": (RobotState(Pose(0, 0.5, 0), 0, 0, 0.12, (0, 1)), RobotState(Pose(0, 0.95, 0), 0, 0, 0.12, (0, 1)), False),
    "progress": (RobotState(Pose(0, -1.0, 0), 0, 0, 0.12, (0, 1)), RobotState(Pose(0, -0.6, 0), 0, 0.5, 0.12, (0, 1)), False),
    "crash+spin": (RobotState(Pose(0, 0, 0), 0, 0, 0.12, (0, 1)), RobotState(Pose(0, 0, 0), 0, 0.8, 0.12, (0, 1)), True),
}
for name, (prev, curr, hit) in cases.items():
    r, event = compute_reward(prev, curr, hit, cfg)
    print(f"{name:10s} reward={r:+.3f} event={event.name}")

print("terms", [float(t) for t in reward_terms(2.0, 1.6, 0.9, False, cfg)])
print("timeout:", check_termination(RobotState(Pose(0, -3, 0), 0, 0, 0.12, (0, 1)), 400, 400).name)

# %%
# The normalizer merges batches exactly like a single pass over all data.
rng = np.random.default_rng(0)
data = rng.normal(3.0, 2.0, size=(1000, 4))
n = RunningNormalizer.empty(4)
for chunk in np.array_split(data, 7):
    n = normalizer_update(n, chunk)
print("mean", n.mean.round(4), "vs", data.mean(0).round(4))
z = normalizer_apply(n, data)
print("standardized mean", z.mean(0).round(6), "std", z.std(0).round(6))
print("outlier clamps to", normalizer_apply(n, np.full(4, 1e6)))
