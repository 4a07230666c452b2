"""Desk-scale Stage One: four robots learn to reach goals in an empty 10 x 10 m room.

Runs a short training by default; pass an iteration count to train longer
(a few hundred iterations reach a high success rate).
"""
# %%
import sys
import tempfile

from multinav.config import desk_config
from multinav.evaluate import evaluate_policy
from multinav.scenarios import scenario
from multinav.train import run_curriculum

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 20
cfg = desk_config(seed=0)
out = tempfile.mkdtemp(prefix="stage_one_")


def report(state, row):
    if row["iteration"] % 10 == 9:
        print(f"iter {row['iteration']:4d} episodes {row['episodes']:2d} "
              f"reward {row['mean_episode_reward']:8.3f} success {row['success_rate']:.2f}")


state = run_curriculum(cfg, out_dir=out, max_iterations=iterations, stop_after_stage_one=True,
                       callback=report)
print("checkpoint and reward curve in", out)

# %%
summary = evaluate_policy(state, scenario("random_empty", 4), n_episodes=40, seed=123)
print(summary.summary_line())
