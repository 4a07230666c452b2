"""Evaluate a checkpoint, export trajectories and replay them bit for bit."""
# %%
import os
import sys
import tempfile

from multinav.config import desk_config
from multinav.evaluate import (TrajectoryLog, evaluate_policy, export_trajectories, go_to_goal,
                               read_trajectories, replay)
from multinav.scenarios import scenario
from multinav.sim import LidarSpec
from multinav.train import init_train_state, load_checkpoint

# Use a checkpoint from 05_train_stage_one.py if given, else an untrained policy.
state = load_checkpoint(sys.argv[1]) if len(sys.argv) > 1 else init_train_state(desk_config())

log = TrajectoryLog()
summary = evaluate_policy(state, scenario("random_obstacles", 4), n_episodes=8, seed=5, log=log)
print(summary.summary_line())

# %%
path = os.path.join(tempfile.mkdtemp(), "trajectories.csv")
export_trajectories(log, path)
print(open(path).read().splitlines()[:3])

ok, message = replay(read_trajectories(path))
print("replay:", message)

# %%
# A hand-written baseline through the same harness.
base = evaluate_policy(None, scenario("swap", 4), 20, 0, controller=go_to_goal,
                       lidar=LidarSpec(n_beams=128))
print("go-to-goal:", base.summary_line())
