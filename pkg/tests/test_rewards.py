import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlsoccer.geometry import FieldGeometry, Team, in_opposing_goal_box
from rlsoccer.policy_io import PolicyName
from rlsoccer.rewards import (RewardConfig, ScenarioName, Terminal, UnknownPolicy, is_terminal, reward, reward_bound,
                              scenario, spawn, strategy_position)
from rlsoccer.simulator import ConfigError, EventKind, Fidelity, SimConfig, SimEvent, SimRng, Simulator, make_world
from rlsoccer.skills import SkillCommand

CFG = SimConfig()
RC = RewardConfig()
GOAL = [SimEvent(EventKind.GOAL_HOME, 1)]
OUT = [SimEvent(EventKind.OUT_OF_BOUNDS, 1)]


def _w(robots=((0.0, 0.0, 0.0, 0), (1.0, 1.0, 0.0, 1)), ball=(1.0, 0.0)):
    return make_world(CFG, list(robots), ball=ball)


@pytest.mark.parametrize("name", list(PolicyName))
def test_no_change_no_reward(name):
    # ball behind the robot (out of view)
    w = _w(robots=((4.0, 0.0, 0.0, 0), (-3.0, 2.0, 0.0, 1)), ball=(3.0, 0.0))
    kw = {"strategy": ((1.0, 1.0), (1.0, 1.0))} if name is PolicyName.POSITIONING else {}
    assert reward(name, w, w.copy(), [], RC, **kw) == 0.0


def test_goal_bonus_mid_field():
    w = _w()
    assert reward(PolicyName.MID_FIELD, w, w.copy(), GOAL, RC) == 10.0
    assert reward(PolicyName.MID_FIELD, w, w.copy(), OUT, RC) == -5.0


def test_ball_progress_shaping():
    a = _w(ball=(1.0, 0.0))
    b = _w(ball=(1.1, 0.0))
    assert reward(PolicyName.MID_FIELD, a, b, [], RC) == pytest.approx(0.1, abs=1e-12)


def test_ball_duel_terms():
    a = _w(robots=((0.0, 0.0, 0.0, 0),), ball=(1.0, 0.0))
    b = _w(robots=((0.2, 0.0, 0.0, 0),), ball=(1.0, 0.0))
    assert reward(PolicyName.BALL_DUEL, a, b, [], RC) == pytest.approx(0.5 * 0.2)


def test_near_goal_far_penalty():
    bare = RewardConfig(w_near_goal_to_ball=0.0)
    near = _w(ball=(2.1, 0.0))  # 2.4 m from the goal center
    far = _w(ball=(1.9, 0.0))  # 2.6 m
    assert reward(PolicyName.NEAR_GOAL, near, near.copy(), [], bare) == 0.0
    assert reward(PolicyName.NEAR_GOAL, near, far, [], bare) == pytest.approx(-5.0 - 0.2)
    # staying far or coming back is not charged again
    assert reward(PolicyName.NEAR_GOAL, far, far.copy(), [], bare) == 0.0
    assert reward(PolicyName.NEAR_GOAL, far, near, [], bare) == pytest.approx(0.2)


def test_near_goal_approach_shaping():
    a = _w(robots=((2.0, 0.0, 0.0, 0),), ball=(3.5, 0.0))
    b = _w(robots=((2.3, 0.0, 0.0, 0),), ball=(3.5, 0.0))
    assert reward(PolicyName.NEAR_GOAL, a, b, [], RC) == pytest.approx(0.5 * 0.3)
    assert reward(PolicyName.NEAR_GOAL, a, b, [], RewardConfig(w_near_goal_to_ball=0.0)) == 0.0


def test_positioning_terms():
    w = _w(robots=((0.0, 0.0, 0.0, 0), (0.3, 0.0, 0.0, 1)), ball=(2.0, 0.0))
    r = reward(PolicyName.POSITIONING, w, w.copy(), [], RC, strategy=((1.0, 0.0), (1.0, 0.0)))
    assert r == pytest.approx(0.01 - 0.05)
    moved = w.copy()
    moved.pose[0, 0] = 0.1
    moved.pose[1, 0] = 2.0
    r = reward(PolicyName.POSITIONING, w, moved, [], RC, strategy=((1.0, 0.0), (1.0, 0.0)))
    assert r == pytest.approx(0.1 + 0.01)


def test_positioning_without_strategy():
    w = _w()
    with pytest.raises(ValueError):
        reward(PolicyName.POSITIONING, w, w, [], RC)


def test_unknown_policy():
    w = _w()
    with pytest.raises(UnknownPolicy):
        reward("GOALIE", w, w, [], RC)


def test_away_team_attacks_negative_x():
    a = _w(robots=((0.0, 0.0, 0.0, 1),), ball=(-1.0, 0.0))
    b = _w(robots=((0.0, 0.0, 0.0, 1),), ball=(-1.1, 0.0))
    assert reward(PolicyName.MID_FIELD, a, b, [], RC, robot_id=0) == pytest.approx(0.1)
    assert reward(PolicyName.MID_FIELD, a, a.copy(), [SimEvent(EventKind.GOAL_AWAY, 1)], RC) == 10.0


pts = st.tuples(st.floats(-4.4, 4.4), st.floats(-2.9, 2.9))


@given(st.lists(st.tuples(pts, pts), min_size=2, max_size=30), st.sampled_from([PolicyName.MID_FIELD,
                                                                                  PolicyName.BALL_DUEL]))
def test_shaping_telescopes(path, name):
    # with no events every reward term is a potential difference
    worlds = [make_world(CFG, [(r[0], r[1], 0.0, 0)], ball=b) for r, b in path]
    total = sum(reward(name, a, b, [], RC) for a, b in zip(worlds, worlds[1:]))
    g = (4.5, 0.0)
    (r0, b0), (rn, bn) = path[0], path[-1]
    expect = RC.w_ball_to_goal * (math.dist(b0, g) - math.dist(bn, g))
    if name is PolicyName.BALL_DUEL:
        expect += RC.w_to_ball * (math.dist(r0, b0) - math.dist(rn, bn))
    assert total == pytest.approx(expect, abs=1e-9)


@given(st.lists(st.tuples(pts, pts), min_size=2, max_size=20))
def test_positioning_strategy_term_telescopes(path):
    rc = RewardConfig(r_ball_in_view_per_step=0.0, w_opponent_proximity=0.0)
    worlds = [make_world(CFG, [(r[0], r[1], 0.0, 0)], ball=(0.0, 0.0)) for r, _ in path]
    strat = [s for _, s in path]
    total = sum(reward(PolicyName.POSITIONING, worlds[i], worlds[i + 1], [], rc, strategy=(strat[i], strat[i + 1]))
                for i in range(len(path) - 1))
    expect = math.dist(path[0][0], strat[0]) - math.dist(path[-1][0], strat[-1])
    assert total == pytest.approx(expect, abs=1e-9)


@pytest.mark.parametrize("fid", ["LOW", "HIGH"])
def test_reward_bounded_on_rollouts(fid):
    cfg = SimConfig().with_fidelity(fid)
    bound = reward_bound(RC, cfg)
    rng = np.random.default_rng(0)
    worst = 0.0
    for ep in range(10):
        w = make_world(cfg, [(rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(-3, 3), 0),
                             (rng.uniform(-3, 3), rng.uniform(-2, 2), 0.0, 1)], ball=(rng.uniform(-2, 2), 0.0))
        sim = Simulator(cfg, w, SimRng(ep))
        for t in range(300):
            prev = w.copy()
            events = sim.step([SkillCommand.walk_and_kick(rng.uniform(-3, 3)),
                               SkillCommand.velocity(*rng.uniform(-0.3, 0.3, 2), 0.0, 0.3, 1.5)])
            for name in PolicyName:
                r = reward(name, prev, w, events, RC, strategy=((0.0, 0.0), (0.1, 0.0)))
                assert math.isfinite(r)
                worst = max(worst, abs(r))
            if events and any(e.kind is not EventKind.KICK_EXECUTED for e in events):
                break
    assert worst <= bound


def test_terminal_rules():
    w = _w()
    assert is_terminal(w, [], 60.0, RC) is Terminal.TIMEOUT
    assert is_terminal(w, [], 59.9, RC) is Terminal.RUNNING
    assert is_terminal(w, GOAL, 3.0, RC) is Terminal.GOAL
    assert is_terminal(w, OUT, 3.0, RC) is Terminal.OUT_OF_BOUNDS
    assert is_terminal(w, GOAL + OUT, 3.0, RC) is Terminal.GOAL
    assert is_terminal(w, [SimEvent(EventKind.GOAL_AWAY, 1)], 3.0, RC) is Terminal.OUT_OF_BOUNDS
    assert is_terminal(w, [SimEvent(EventKind.GOAL_AWAY, 1)], 3.0, RC, team=Team.AWAY) is Terminal.GOAL
    with pytest.raises(ValueError):
        is_terminal(w, [], -1.0, RC)


def test_sideline_crossing_is_out_of_bounds():
    cfg = SimConfig()
    w = make_world(cfg, [(0.0, 0.0, 0.0, 0)], ball=(1.0, 2.95), ball_velocity=(0.0, 2.0))
    events = Simulator(cfg, w).step([None])
    assert is_terminal(w, events, 1.0, RC) is Terminal.OUT_OF_BOUNDS


def test_reward_config_validation():
    with pytest.raises(ConfigError):
        RewardConfig(r_goal=0).validate()
    with pytest.raises(ConfigError):
        RewardConfig(r_oob=1).validate()
    RewardConfig().validate()


def test_scenario_fidelity_bindings():
    assert scenario(ScenarioName.NEARGOAL_1V0).fidelity is Fidelity.HIGH
    for n in (ScenarioName.BALL_DUEL_2V0, ScenarioName.MIDFIELD_1V0, ScenarioName.POSITIONING):
        assert scenario(n).fidelity is Fidelity.LOW


@pytest.mark.parametrize("seed", range(50))
def test_neargoal_ball_in_box(seed):
    w = spawn(scenario(ScenarioName.NEARGOAL_1V0), np.random.default_rng(seed))
    assert in_opposing_goal_box(FieldGeometry(), Team.HOME, tuple(w.ball_pos))
    # robot on the field side of the ball: no closer to the goal center than the ball
    gx, gy = 4.5, 0.0
    rx, ry = w.pose[0, :2]
    bx, by = w.ball_pos
    assert (rx - bx) * (bx - gx) + (ry - by) * (by - gy) >= -1e-12
    assert 0.3 <= math.dist((rx, ry), (bx, by)) <= 1.0


def test_ball_duel_two_home_no_opponents():
    w = spawn(scenario(ScenarioName.BALL_DUEL_2V0), np.random.default_rng(0))
    assert w.n_robots == 2 and list(w.team) == [0, 0]


def test_positioning_population():
    w = spawn(scenario(ScenarioName.POSITIONING), np.random.default_rng(0))
    assert list(w.team) == [0, 0, 1, 1]


@pytest.mark.parametrize("name", list(ScenarioName))
def test_spawn_deterministic_and_separated(name):
    spec = scenario(name)
    a = spawn(spec, np.random.default_rng(3))
    b = spawn(spec, np.random.default_rng(3))
    assert a.same_as(b)
    geo = spec.geometry or FieldGeometry()
    for i in range(a.n_robots):
        assert abs(a.pose[i, 0]) <= geo.half_length and abs(a.pose[i, 1]) <= geo.half_width
        assert math.dist(a.pose[i, :2], a.ball_pos) > geo.robot_radius + geo.ball_radius
        for j in range(i + 1, a.n_robots):
            assert math.dist(a.pose[i, :2], a.pose[j, :2]) > 2 * geo.robot_radius


@given(pts, st.sampled_from([0, 1]))
def test_strategy_position_in_field(ball, team):
    w = make_world(CFG, [(0.0, 0.0, 0.0, team)], ball=ball)
    x, y = strategy_position(w, 0)
    assert abs(x) <= 4.0 and abs(y) <= 2.5
    sign = 1 if team == 0 else -1
    side = -1 if ball[1] >= 0 else 1
    # trails the ball on the far lateral side, clamped 0.5 m inside the field
    assert x == min(max(ball[0] - sign * 1.5, -4.0), 4.0)
    assert y == min(max(ball[1] + side * 1.5, -2.5), 2.5)
