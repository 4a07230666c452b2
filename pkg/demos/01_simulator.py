"""Disc robots, wall segments, lidar and collisions in the 2-D simulator."""
# %%
import math

import numpy as np

from multinav.sim import (LidarSpec, ObstacleSegment, Pose, RobotState, cast_scan,
                          detect_collisions, make_world, step_kinematics, world_step)

# Unicycle kinematics: one Euler step of 0.1 s.
print(step_kinematics(Pose(0, 0, 0), v=1.0, w=0.0, dt=0.1))
print(step_kinematics(Pose(0, 0, 0), v=0.0, w=1.0, dt=0.1))

# %%
# Two robots facing a short wall.  Robots are discs of radius 0.12 m.
wall = ObstacleSegment((2.0, -1.0), (2.0, 1.0))
robots = [RobotState(Pose(0.0, 0.0, 0.0), 0.0, 0.0, 0.12, goal=(4.0, 0.0)),
          RobotState(Pose(0.0, 1.0, -math.pi / 2), 0.0, 0.0, 0.12, goal=(0.0, -3.0))]
world = make_world(robots, [wall])

# 181 beams over 180 degrees puts beam 90 straight ahead.
spec = LidarSpec(n_beams=181)
scan = cast_scan(world, 0, spec)
print("ahead:", scan[90], " +45 deg:", scan[135], " right:", scan[0])
# Robot 0 sees robot 1 to its left (beam 180 points at +90 deg).
print("left:", scan[180])

# %%
# Synchronous stepping: both actions are applied against the same tick.
actions = np.array([[1.0, 0.0], [0.5, 0.0]])
for _ in range(8):
    world = world_step(world, actions)
print("tick", world.tick, "positions", world.pos.round(3).tolist())
print("collisions", detect_collisions(world))

# Keep driving until the two discs overlap.
while not detect_collisions(world).any():
    world = world_step(world, actions)
print("first contact at tick", world.tick, world.pos.round(3).tolist())
