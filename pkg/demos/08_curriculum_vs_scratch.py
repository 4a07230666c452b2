"""Two-stage curriculum against training on the full scenario mix from scratch.

Both arms get the same iteration budget; the curriculum arm spends part of
it in the empty room first.  Pass a budget (default 40) to run longer.
"""
# %%
import sys

import numpy as np

from multinav.config import desk_config
from multinav.train import run_curriculum

budget = int(sys.argv[1]) if len(sys.argv) > 1 else 40
seed = 0
common = dict(seed=seed, curriculum={"total_iterations": budget,
                                     "max_stage1_iterations": budget // 2})
curriculum = run_curriculum(desk_config(**common))
scratch = run_curriculum(desk_config(**{**common, "curriculum": {**common["curriculum"],
                                                                 "enabled": False}}))


def tail_reward(state, k=20):
    r = np.array([row["mean_episode_reward"] for row in state.history[-k:]])
    return float(np.nanmean(r)) if np.isfinite(r).any() else float("nan")


print("stage per iteration (curriculum):", "".join(str(r["stage"]) for r in curriculum.history))
print(f"last-20 mean episode reward: curriculum {tail_reward(curriculum):.3f} "
      f"scratch {tail_reward(scratch):.3f}")
