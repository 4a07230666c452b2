import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multinav.sim import (LidarSpec, ObstacleSegment, Pose, RobotState, Status, World,
                          cast_scan, cast_scans, detect_collisions, make_world, step_kinematics,
                          world_step, wrap_angle)

from oracles import disc_cases, segment_cases


def robot(x, y, theta=0.0, radius=0.12, goal=(0.0, 0.0), status=Status.ACTIVE):
    return RobotState(Pose(x, y, theta), 0.0, 0.0, radius, goal, status)


WALL = ObstacleSegment((2.0, -1.0), (2.0, 1.0))


@pytest.mark.parametrize("pose, v, w, expected", [
    (Pose(0, 0, 0), 1.0, 0.0, (0.1, 0.0, 0.0)),
    (Pose(0, 0, math.pi / 2), 1.0, 0.0, (0.0, 0.1, math.pi / 2)),
    (Pose(0, 0, 0), 0.0, 1.0, (0.0, 0.0, 0.1)),
])
def test_step_kinematics_examples(pose, v, w, expected):
    out = step_kinematics(pose, v, w, 0.1)
    assert (out.x, out.y, out.theta) == pytest.approx(expected, abs=1e-12)


def test_step_kinematics_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_kinematics(Pose(0, 0, 0), 1.0, 0.0, 0.0)


@given(st.floats(-3.1, 3.1), st.floats(0, 1), st.floats(-1, 1))
def test_zero_rates_preserve_exactly(theta, v, w):
    p = Pose(0.3, -0.7, theta)
    assert step_kinematics(p, v, 0.0, 0.1).theta == theta
    q = step_kinematics(p, 0.0, w, 0.1)
    assert (q.x, q.y) == (p.x, p.y)


@given(st.floats(-50, 50))
def test_wrap_angle_range(theta):
    out = wrap_angle(theta)
    assert -math.pi <= out <= math.pi
    assert math.isclose(math.cos(out), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(out), math.sin(theta), abs_tol=1e-9)


def test_lidar_spec_validation():
    with pytest.raises(ValueError):
        LidarSpec(n_beams=1)
    with pytest.raises(ValueError):
        LidarSpec(fov=7.0)
    with pytest.raises(ValueError):
        LidarSpec(max_range=0.0)


def test_robot_state_invariants():
    with pytest.raises(ValueError):
        RobotState(Pose(0, 0, 0), -0.1, 0.0, 0.12, (1, 1))
    with pytest.raises(ValueError):
        RobotState(Pose(0, 0, 0), 0.0, 0.0, 0.0, (1, 1))
    with pytest.raises(ValueError):
        ObstacleSegment((1, 1), (1, 1))


def test_world_rejects_robot_outside_bounds():
    with pytest.raises(ValueError):
        make_world([robot(6.0, 0.0)], bounds=(-5, -5, 5, 5))


def test_center_beam_hits_perpendicular_wall():
    world = make_world([robot(0, 0)], [WALL])
    scan = cast_scan(world, 0, LidarSpec(n_beams=181))
    assert scan[90] == pytest.approx(2.0, abs=1e-12)


def test_empty_world_returns_max_range_exactly():
    world = make_world([robot(0, 0)])
    scan = cast_scan(world, 0, LidarSpec())
    assert scan.shape == (512,)
    assert np.all(scan == 4.0)


def test_beam_at_45_degrees_misses_short_wall():
    # Beam i points at -fov/2 + i*fov/(n-1); with 181 beams over pi, beam 135 is at +45 deg.
    world = make_world([robot(0, 0)], [WALL])
    scan = cast_scan(world, 0, LidarSpec(n_beams=181))
    assert scan[135] == 4.0


def test_other_robot_seen_as_disc_and_self_invisible():
    world = make_world([robot(0, 0), robot(1.0, 0.0, radius=0.2)])
    scan = cast_scan(world, 0, LidarSpec(n_beams=181))
    assert scan[90] == pytest.approx(0.8, abs=1e-12)
    # the second robot faces +x and sees nothing (robot 0 is behind it)
    assert np.all(cast_scan(world, 1, LidarSpec(n_beams=181)) == 4.0)


def test_cast_scans_matches_single_robot_calls():
    rng = np.random.default_rng(3)
    robots = [robot(*rng.uniform(-3, 3, 2), rng.uniform(-3, 3)) for _ in range(5)]
    world = make_world(robots, [WALL, ((-4, -4), (4, -4))])
    spec = LidarSpec(n_beams=64)
    batch = cast_scans(world, spec)
    for i in range(5):
        assert np.array_equal(batch[i], cast_scan(world, i, spec))


def test_cast_scan_bad_index():
    with pytest.raises(IndexError):
        cast_scan(make_world([robot(0, 0)]), 3, LidarSpec())


@given(st.lists(st.tuples(st.floats(-4, 4), st.floats(-4, 4), st.floats(-3.1, 3.1)),
                min_size=1, max_size=6))
@settings(max_examples=40)
def test_scan_values_within_range(poses):
    world = make_world([robot(x, y, t) for x, y, t in poses],
                       [((-4.5, -4.5), (4.5, -4.5)), ((4.5, -4.5), (4.5, 4.5))])
    scans = cast_scans(world, LidarSpec(n_beams=32))
    assert np.all(scans > 0) and np.all(scans <= 4.0)


@pytest.mark.parametrize("gap, expected", [(0.2, True), (0.3, False), (0.24, False)])
def test_robot_robot_collisions(gap, expected):
    world = make_world([robot(0, 0), robot(gap, 0)])
    assert list(detect_collisions(world)) == [expected, expected]


def test_robot_wall_collision():
    world = make_world([robot(1.9, 0.0)], [WALL])
    assert detect_collisions(world)[0]
    assert not detect_collisions(make_world([robot(1.8, 0.0)], [WALL]))[0]


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=2, max_size=8))
def test_collision_symmetry(points):
    world = make_world([robot(x, y) for x, y in points])
    hit = detect_collisions(world)
    n = len(points)
    for i in range(n):
        partners = [j for j in range(n) if j != i
                    and math.dist(points[i], points[j]) < 0.24]
        assert hit[i] == bool(partners)


def test_world_step_zero_action_keeps_poses():
    world = make_world([robot(0, 0), robot(1, 1, 0.5)])
    nxt = world_step(world, np.zeros((2, 2)))
    assert np.array_equal(nxt.pos, world.pos) and np.array_equal(nxt.theta, world.theta)
    assert nxt.tick == world.tick + 1


def test_world_step_freezes_finished_robots():
    world = make_world([robot(0, 0, status=Status.COLLIDED), robot(1, 1)])
    nxt = world_step(world, np.array([[1.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(nxt.pos[0], world.pos[0]) and nxt.theta[0] == world.theta[0]
    assert nxt.pos[1, 0] == pytest.approx(1.1)


def test_world_step_action_count_mismatch():
    world = make_world([robot(0, 0), robot(1, 1)])
    with pytest.raises(ValueError):
        world_step(world, np.zeros((3, 2)))


def test_world_step_is_pure():
    world = make_world([robot(0, 0), robot(1, 1)])
    before = world.copy()
    world_step(world, np.ones((2, 2)))
    assert world == before


@given(st.permutations(range(5)), st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_world_step_order_independent(order, seed):
    rng = np.random.default_rng(seed)
    world = make_world([robot(*rng.uniform(-3, 3, 2), rng.uniform(-3, 3)) for _ in range(5)],
                       [WALL])
    actions = np.column_stack([rng.uniform(0, 1, 5), rng.uniform(-1, 1, 5)])
    direct = world_step(world, actions)
    order = np.array(order)
    permuted = world_step(world.permuted(order), actions[order])
    for k, i in enumerate(order):
        assert permuted.ids[k] == direct.ids[i]
        assert np.array_equal(permuted.pos[k], direct.pos[i])
        assert permuted.theta[k] == direct.theta[i]
    assert np.array_equal(detect_collisions(permuted), detect_collisions(direct)[order])


def test_world_step_bitwise_deterministic():
    rng = np.random.default_rng(0)
    world = make_world([robot(*rng.uniform(-3, 3, 2)) for _ in range(4)])
    actions = rng.uniform(0, 1, (4, 2))
    assert world_step(world, actions) == world_step(world.copy(), actions.copy())


def test_world_invariants():
    with pytest.raises(ValueError):
        World(pos=[(0, 0)], theta=[0], v=[0], w=[0], radius=[0.1], goal=[(1, 1)], status=[0],
              obstacles=np.zeros((0, 4)), dt=0.0)


def test_raycast_matches_constructed_segment_hits():
    for pose, n_beams, i, seg, d in segment_cases(np.random.default_rng(0), 60):
        world = make_world([robot(*pose)], [(seg[:2], seg[2:])])
        assert cast_scan(world, 0, LidarSpec(n_beams=n_beams))[i] == pytest.approx(d, abs=1e-6)


def test_raycast_matches_constructed_disc_hits():
    for pose, n_beams, i, (cx, cy, r), d in disc_cases(np.random.default_rng(1), 60):
        world = make_world([robot(*pose), robot(cx, cy, radius=r)], bounds=(-9, -9, 9, 9))
        assert cast_scan(world, 0, LidarSpec(n_beams=n_beams))[i] == pytest.approx(d, abs=1e-6)
