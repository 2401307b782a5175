import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlsoccer.simulator import EventKind, SimConfig, Simulator, make_world
from rlsoccer.skills import (SkillCommand, SkillKind, can_kick, can_kick_one_hot, kick_approach_point, walk_and_kick,
                             walk_to_point)

CFG = SimConfig()
HL = CFG.geometry.robot_half_length


def test_can_kick_examples():
    ahead = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(HL + 0.15, 0.0))
    assert can_kick(ahead, 0, CFG) and can_kick_one_hot(ahead, 0, CFG) == (0.0, 1.0)
    behind = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(-HL - 0.15, 0.0))
    assert not can_kick(behind, 0, CFG)
    far = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(5.0, 0.0))
    assert not can_kick(far, 0, CFG) and can_kick_one_hot(far, 0, CFG) == (1.0, 0.0)


def test_can_kick_range_edge():
    inside = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(HL + CFG.kick_range - 1e-6, 0.0))
    outside = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(HL + CFG.kick_range + 1e-6, 0.0))
    assert can_kick(inside, 0, CFG) and not can_kick(outside, 0, CFG)


def test_fallen_robot_cannot_kick():
    w = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(HL + 0.1, 0.0))
    w.upright[0] = 0
    assert not can_kick(w, 0, CFG)


def test_walk_to_point_fixed_point():
    w = make_world(CFG, [(1.0, 1.0, 0.4, 0)])
    assert walk_to_point(w, 0, (1.0, 1.0), 0.4, CFG) == (0.0, 0.0, 0.0)


@given(st.floats(-4, 4), st.floats(-3, 3), st.floats(-3, 3), st.floats(-4, 4), st.floats(-3, 3), st.floats(-4, 4))
def test_walk_to_point_respects_limits(x, y, th, tx, ty, face):
    w = make_world(CFG, [(x, y, th, 0), (0.0, 0.0, 0.0, 1)])
    vx, vy, om = walk_to_point(w, 0, (tx, ty), face, CFG)
    assert math.hypot(vx, vy) <= CFG.max_linear_speed + 1e-12
    assert abs(om) <= CFG.max_angular_speed + 1e-12


def test_free_path_traversal_time():
    w = make_world(CFG, [(-2.0, 0.0, 0.0, 0)], ball=(-4.0, -2.5))
    sim = Simulator(CFG, w)
    cmd = SkillCommand.to_point((2.0, 0.0), 0.0)
    t = 0
    while math.dist(w.pose[0, :2], (2.0, 0.0)) > CFG.arrival_radius:
        sim.step([cmd])
        t += 1
        assert t < 1000
    assert t * CFG.dt <= 4 / 0.3 * 1.15


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_distance_strictly_decreases_in_low(x, y, th, tx, ty):
    w = make_world(CFG, [(x, y, th, 0)], ball=(-4.4, -2.9))
    sim = Simulator(CFG, w)
    cmd = SkillCommand.to_point((tx, ty), 0.0)
    d = math.dist(w.pose[0, :2], (tx, ty))
    for _ in range(400):
        if d <= CFG.arrival_radius:
            break
        sim.step([cmd])
        nd = math.dist(w.pose[0, :2], (tx, ty))
        assert nd < d
        d = nd


def test_obstacle_clearance():
    w = make_world(CFG, [(-2.0, 0.0, 0.0, 0), (0.0, 0.0, 0.0, 1)], ball=(-4.4, -2.9))
    sim = Simulator(CFG, w)
    cmd = SkillCommand.to_point((2.0, 0.0), 0.0)
    min_clear = math.inf
    geo = CFG.geometry
    for _ in range(600):
        sim.step([cmd, None])
        # walker center to the obstacle's rectangular footprint
        lx, ly = w.pose[0, :2] - w.pose[1, :2]
        qx = min(max(lx, -geo.robot_half_length), geo.robot_half_length)
        qy = min(max(ly, -geo.robot_half_width), geo.robot_half_width)
        min_clear = min(min_clear, math.hypot(lx - qx, ly - qy))
    assert math.dist(w.pose[0, :2], (2.0, 0.0)) <= CFG.arrival_radius + 0.05
    assert min_clear >= 0.20


def test_kick_fires_when_aligned_at_approach_point():
    w = make_world(CFG, [(0.0, 0.0, 0.0, 0)], ball=(1.0, 0.0))
    ax, ay = kick_approach_point(w, 0.0, CFG)
    w.pose[0, :2] = (ax, ay)
    events = Simulator(CFG, w).step([SkillCommand.walk_and_kick(0.0)])
    assert EventKind.KICK_EXECUTED in [e.kind for e in events]
    assert w.ball_vel[0] > 2.0


def test_own_goal_kick_not_vetoed():
    w = make_world(CFG, [(0.0, 0.0, math.pi, 0)], ball=(0.0, 0.0))
    ax, ay = kick_approach_point(w, math.pi, CFG)
    w.pose[0, :2] = (ax, ay)
    events = Simulator(CFG, w).step([SkillCommand.walk_and_kick(math.pi)])
    assert EventKind.KICK_EXECUTED in [e.kind for e in events]
    assert w.ball_vel[0] < 0


def test_far_robot_does_not_kick_and_approaches_monotonically():
    w = make_world(CFG, [(-2.0, 0.0, 0.0, 0)], ball=(0.0, 0.0))
    target = kick_approach_point(w, 0.0, CFG)
    sim = Simulator(CFG, w)
    d = math.dist(w.pose[0, :2], target)
    for _ in range(100):
        vx, vy, om, kick = walk_and_kick(w, 0, 0.0, CFG)
        assert not kick
        sim.step([SkillCommand.walk_and_kick(0.0)])
        nd = math.dist(w.pose[0, :2], target)
        assert nd < d
        d = nd


@given(st.floats(0, 2 * math.pi), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
@settings(max_examples=40, deadline=None)
def test_walk_and_kick_eventually_kicks(bearing, heading, kick_angle):
    ball = (0.0, 0.0)
    start = (2.0 * math.cos(bearing), 2.0 * math.sin(bearing))
    w = make_world(CFG, [(start[0], start[1], heading, 0)], ball=ball)
    sim = Simulator(CFG, w)
    cmd = SkillCommand.walk_and_kick(kick_angle)
    for _ in range(int(20 / CFG.dt)):
        if any(e.kind is EventKind.KICK_EXECUTED for e in sim.step([cmd])):
            return
    pytest.fail("no kick within 20 s")


def test_velocity_command_preclamped():
    c = SkillCommand.velocity(1.0, 1.0, 5.0, 0.3, 1.5)
    assert math.hypot(c.vx, c.vy) == pytest.approx(0.3) and c.omega == 1.5


@pytest.mark.parametrize("cmd", [SkillCommand.velocity(0.1, -0.1, 0.2, 0.3, 1.5), SkillCommand.to_point((1, 2), 0.5),
                                 SkillCommand.walk_and_kick(-1.0), SkillCommand.stand()])
def test_command_round_trip(cmd):
    assert SkillCommand.from_dict(cmd.to_dict()) == cmd


def test_stand_kind():
    assert SkillCommand.stand().kind is SkillKind.STAND
