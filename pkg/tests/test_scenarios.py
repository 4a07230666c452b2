import math

import numpy as np
import pytest

from multinav.scenarios import (PAPER_STAGE_TWO_ALLOCATION, ScenarioError, ScenarioId, Stage,
                                StageSpec, build_world, load_catalog, paper_stage, respawn,
                                scenario, stage_worlds)
from multinav.seeding import make_rng
from multinav.sim import Status, detect_collisions, point_segment_distance


def pairwise_min(pos):
    d = np.sqrt(((pos[:, None] - pos[None]) ** 2).sum(-1))
    d[np.diag_indices(len(pos))] = np.inf
    return d.min()


def test_catalog_has_all_scenarios():
    assert set(load_catalog()) == set(ScenarioId)


def test_build_world_deterministic():
    spec = scenario("random_obstacles", 6)
    assert build_world(spec, 11) == build_world(spec, 11)
    assert build_world(spec, 11) != build_world(spec, 12)


@pytest.mark.parametrize("sid, n", [("circle", 12), ("corridor", 6), ("crossing", 8),
                                    ("swap", 6), ("random_empty", 20),
                                    ("random_obstacles", 10), ("evacuation", 8)])
def test_spawn_invariants(sid, n):
    spec = scenario(sid, n)
    for seed in range(20):
        w = build_world(spec, seed)
        assert w.n_robots == n
        assert pairwise_min(w.pos) > 2 * spec.radius + spec.min_separation
        assert not detect_collisions(w).any()
        assert w.inside_bounds().all()
        assert np.all(np.linalg.norm(w.goal - w.pos, axis=1) >= spec.min_goal_distance)
        if len(w.obstacles):
            d = point_segment_distance(w.pos, w.obstacles)
            assert d.min() > spec.radius


def test_spawn_separation_sweep_1000_seeds():
    spec = scenario("random_empty", 20)
    for seed in range(1000):
        assert pairwise_min(build_world(spec, seed).pos) > 0.24


def test_circle_goals_antipodal():
    w = build_world(scenario("circle", 8), 0)
    assert np.allclose(w.goal, -w.pos)
    assert np.allclose(np.linalg.norm(w.pos, axis=1), 4.0)


def test_too_many_robots_raises():
    with pytest.raises(ScenarioError):
        build_world(scenario("circle", 200), 0)
    with pytest.raises(ScenarioError):
        build_world(scenario("corridor", 400), 0)


def test_respawn_touches_only_one_robot():
    w = build_world(scenario("random_empty", 5), 3)
    status = w.status.copy()
    status[2] = Status.ARRIVED
    w = w.copy(status=status)
    out = respawn(w, 2, make_rng(9))
    others = [0, 1, 3, 4]
    assert np.array_equal(out.pos[others], w.pos[others])
    assert np.array_equal(out.goal[others], w.goal[others])
    assert out.status[2] == Status.ACTIVE
    assert not np.array_equal(out.pos[2], w.pos[2])
    assert pairwise_min(out.pos) > 0.34


def test_respawn_rejects_active_robot():
    w = build_world(scenario("random_empty", 2), 0)
    with pytest.raises(ValueError):
        respawn(w, 0, make_rng(0))


def test_paper_stage_counts():
    assert paper_stage(Stage.ONE).total_robots == 20
    assert paper_stage(Stage.TWO).total_robots == 58
    assert sum(PAPER_STAGE_TWO_ALLOCATION.values()) == 58
    worlds = stage_worlds(paper_stage(Stage.TWO), 0)
    assert sum(w.n_robots for w in worlds) == 58


def test_stage_spec_enforcement():
    with pytest.raises(ValueError):
        StageSpec(Stage.ONE, (scenario("random_empty", 4),))
    with pytest.raises(ValueError):
        StageSpec(Stage.ONE, (scenario("circle", 20),))
    StageSpec(Stage.ONE, (scenario("random_empty", 4),), enforce_paper_counts=False)


def test_catalog_rejects_unknown_keys(tmp_path):
    p = tmp_path / "cat.yaml"
    p.write_text("version: 1\nscenarios:\n  circle:\n    spawn_rule: perimeter\n"
                 "    bounds: [-5, -5, 5, 5]\n    colour: red\n")
    with pytest.raises(ValueError):
        load_catalog(str(p))
