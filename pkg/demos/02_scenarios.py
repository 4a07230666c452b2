"""The seven training scenarios, stage populations and per-robot respawn."""
# %%
import numpy as np

from multinav.scenarios import (PAPER_STAGE_TWO_ALLOCATION, ScenarioId, Stage, build_world,
                                load_catalog, paper_stage, respawn, scenario, stage_worlds)
from multinav.seeding import make_rng
from multinav.sim import Status

catalog = load_catalog()
for sid, spec in catalog.items():
    w = build_world(spec.with_robots(PAPER_STAGE_TWO_ALLOCATION.get(sid, 4)), seed=0)
    gaps = np.linalg.norm(w.pos[:, None] - w.pos[None], axis=-1)
    gaps[np.diag_indices(w.n_robots)] = np.inf
    print(f"{sid.value:17s} robots={w.n_robots:2d} segments={len(w.obstacles):3d} "
          f"min start gap={gaps.min():.2f} m")

# %%
# Worlds are pure functions of (scenario, seed).
spec = scenario("random_obstacles", 6)
print("same seed, same world:", build_world(spec, 7) == build_world(spec, 7))

# %%
# Stage populations: 20 robots on empty random worlds, then 58 across all scenarios.
for stage in (Stage.ONE, Stage.TWO):
    worlds = stage_worlds(paper_stage(stage), seed=1)
    print(stage.name, sum(w.n_robots for w in worlds), "robots in", len(worlds), "worlds")

# %%
# A finished robot gets a fresh start and goal; the others are untouched.
w = build_world(scenario(ScenarioId.RANDOM_EMPTY, 4), 3)
status = w.status.copy()
status[1] = Status.ARRIVED
w2 = respawn(w.copy(status=status), 1, make_rng(11))
print("moved:", [not np.array_equal(a, b) for a, b in zip(w.pos, w2.pos)])
