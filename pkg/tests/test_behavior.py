import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import SELECTOR_ORDER, lattice_window, selector_table
from rlsoccer.behavior import (DimensionMismatch, Rule, ScriptConfig, SelectorConfig, SelectorState, defender_target,
                               evaluate_rules, goalie_target, make_bundle, run_team_tick, scripted_defender,
                               scripted_goalie, select)
from rlsoccer.geometry import FieldGeometry, Team
from rlsoccer.policy_io import PolicyName, SPECS
from rlsoccer.ppo import MlpPolicy
from rlsoccer.simulator import ConfigError, EventKind, SimConfig, SimRng, Simulator, make_world
from rlsoccer.skills import SkillKind

CFG = SimConfig()
GEO = FieldGeometry()
SEL = SelectorConfig(hysteresis_ticks=0)


def _choose(robots, ball, cfg=SEL):
    return evaluate_rules(make_world(CFG, robots, ball=ball), 0, cfg)[0]


def test_select_examples():
    assert _choose([(0.0, 1.0, 0, 0), (0.4, 0.0, 0, 1)], (0.0, 0.0)) is PolicyName.BALL_DUEL
    assert _choose([(-1.0, 0.0, 0, 0)], (0.0, 0.0)) is PolicyName.MID_FIELD
    assert _choose([(-3.0, 0.0, 0, 0), (1.0, 0.0, 0, 0)], (0.0, 0.0)) is PolicyName.POSITIONING
    assert _choose([(3.5, 0.0, 0, 0), (1.0, 0.0, 0, 0)], (4.0, 0.0)) is PolicyName.NEAR_GOAL


def test_fallen_teammate_does_not_trigger_positioning():
    w = make_world(CFG, [(-3.0, 0.0, 0, 0), (1.0, 0.0, 0, 0)], ball=(0.0, 0.0))
    w.upright[1] = 0
    assert evaluate_rules(w, 0, SEL)[0] is PolicyName.MID_FIELD


def test_away_team_goal_box():
    # AWAY attacks -x
    assert _choose([(-3.5, 0.0, 0, 1)], (-4.0, 0.0)) is PolicyName.NEAR_GOAL
    assert _choose([(3.5, 0.0, 0, 1)], (4.0, 0.0)) is PolicyName.MID_FIELD


def _lattice_states(window):
    rows = np.array(list(itertools.product(range(len(window)), repeat=4)))
    pts = np.array(window)
    return pts[rows[:, 0]], pts[rows[:, 1]], pts[rows[:, 2]], pts[rows[:, 3]]


def check_lattice(window, mate_upright=True, config=SEL):
    ball, me, mate, opp = _lattice_states(window)
    expected = selector_table(ball, me, mate, opp, np.full(len(ball), mate_upright), margin=config.near_goal_margin)
    w = make_world(CFG, [(0.0, 0.0, 0.0, 0), (1.0, 0.0, 0.0, 0), (2.0, 0.0, 0.0, 1)], ball=(0.0, 0.0))
    w.upright[1] = int(mate_upright)
    names = [PolicyName(n) for n in SELECTOR_ORDER]
    mismatches = 0
    for k in range(len(ball)):
        w.ball_pos[:] = ball[k]
        w.pose[0, :2] = me[k]
        w.pose[1, :2] = mate[k]
        w.pose[2, :2] = opp[k]
        if select(w, 0, config, GEO).chosen is not names[expected[k]]:
            mismatches += 1
    return len(ball), mismatches


def test_selector_matches_oracle_small_lattice():
    # straddles the goal-box side line y = 2.0 and both radii
    n, bad = check_lattice(lattice_window(3.0, 1.5, 4))
    assert n == 4 ** 8 and bad == 0


def test_selector_matches_oracle_fallen_mate():
    n, bad = check_lattice(lattice_window(3.0, 1.5, 3), mate_upright=False)
    assert bad == 0


def test_selector_matches_oracle_with_margin():
    n, bad = check_lattice(lattice_window(2.25, 1.75, 3), config=SelectorConfig(near_goal_margin=0.5,
                                                                                   hysteresis_ticks=0))
    assert bad == 0


pt = st.tuples(st.floats(-4.5, 4.5), st.floats(-3, 3))


@given(pt, pt, pt, pt, st.floats(0, 1), st.floats(0, 1))
def test_margin_monotone(ball, me, mate, opp, m1, extra):
    robots = [(me[0], me[1], 0, 0), (mate[0], mate[1], 0, 0), (opp[0], opp[1], 0, 1)]
    a = _choose(robots, ball, SelectorConfig(near_goal_margin=m1, hysteresis_ticks=0))
    b = _choose(robots, ball, SelectorConfig(near_goal_margin=m1 + extra, hysteresis_ticks=0))
    if a is PolicyName.NEAR_GOAL:
        assert b is PolicyName.NEAR_GOAL


@given(pt, pt, pt, pt)
def test_exactly_one_rule(ball, me, mate, opp):
    w = make_world(CFG, [(me[0], me[1], 0, 0), (mate[0], mate[1], 0, 0), (opp[0], opp[1], 0, 1)], ball=ball)
    name, rule, inputs = evaluate_rules(w, 0, SEL)
    assert isinstance(rule, Rule) and name in PolicyName


@given(st.lists(st.tuples(pt, pt, pt), min_size=10, max_size=80), st.integers(1, 8))
@settings(max_examples=60, deadline=None)
def test_hysteresis_spacing(seq, h):
    cfg = SelectorConfig(hysteresis_ticks=h)
    state = SelectorState()
    changes = []
    prev = None
    for t, (ball, me, opp) in enumerate(seq):
        w = make_world(CFG, [(me[0], me[1], 0, 0), (opp[0], opp[1], 0, 1)], ball=ball)
        d = select(w, 0, cfg, GEO, state)
        if prev is not None and d.chosen is not prev:
            changes.append(t)
            assert d.held is False and d.winner is d.chosen
        prev = d.chosen
    assert all(b - a >= h for a, b in zip(changes, changes[1:]))


def test_hysteresis_commits_after_persisting():
    cfg = SelectorConfig(hysteresis_ticks=3)
    state = SelectorState()
    mid = make_world(CFG, [(-1.0, 0.0, 0, 0)], ball=(0.0, 0.0))
    duel = make_world(CFG, [(-1.0, 0.0, 0, 0), (0.3, 0.0, 0, 1)], ball=(0.0, 0.0))
    assert select(mid, 0, cfg, GEO, state).chosen is PolicyName.MID_FIELD
    got = [select(duel, 0, cfg, GEO, state) for _ in range(3)]
    assert [d.chosen for d in got] == [PolicyName.MID_FIELD, PolicyName.MID_FIELD, PolicyName.BALL_DUEL]
    assert got[0].held and got[0].winner is PolicyName.BALL_DUEL


def test_disabled_policies_fall_through():
    cfg = SelectorConfig(hysteresis_ticks=0, disabled=frozenset({PolicyName.MID_FIELD}))
    assert _choose([(-1.0, 0.0, 0, 0)], (0.0, 0.0), cfg) is PolicyName.BALL_DUEL
    cfg = SelectorConfig(hysteresis_ticks=0, disabled=frozenset({PolicyName.BALL_DUEL}))
    assert _choose([(0.0, 1.0, 0, 0), (0.4, 0.0, 0, 1)], (0.0, 0.0), cfg) is PolicyName.MID_FIELD


def test_selector_config_validation():
    with pytest.raises(ConfigError):
        SelectorConfig(near_ball_radius=0).validate()
    with pytest.raises(ConfigError):
        SelectorConfig(hysteresis_ticks=-1).validate()
    with pytest.raises(ConfigError):
        SelectorConfig(disabled=frozenset(PolicyName)).validate()


def _goalie_oracle(ball, goal=(4.5, 0.0), depth=0.6, width=2.2):
    # intersect the ball->goal segment with the goal-area rectangle boundary
    gx, gy = goal
    bx, by = ball
    hits = []
    fx = gx - depth
    if bx != gx:
        t = (fx - gx) / (bx - gx)
        if 0 < t <= 1 and abs(gy + t * (by - gy)) <= width / 2:
            hits.append(t)
    for side in (width / 2, -width / 2):
        if by != gy:
            t = (side - gy) / (by - gy)
            x = gx + t * (bx - gx)
            if 0 < t <= 1 and fx <= x <= gx:
                hits.append(t)
    t = min(hits) if hits else 1.0
    return gx + t * (bx - gx), gy + t * (by - gy)


def test_goalie_center_ball():
    w = make_world(CFG, [(4.0, 0.0, math.pi, 1)], ball=(0.0, 0.0))
    assert goalie_target(w, 0, GEO) == pytest.approx((3.9, 0.0))
    cmd = scripted_goalie(w, 0, CFG)
    assert cmd.kind is SkillKind.WALK_TO_POINT and cmd.face == pytest.approx(math.pi)


@given(st.floats(-4.4, 4.4), st.floats(-2.9, 2.9))
def test_goalie_geometric_oracle(bx, by):
    w = make_world(CFG, [(4.0, 0.0, math.pi, 1)], ball=(bx, by))
    if bx >= 4.5:
        return
    assert goalie_target(w, 0, GEO) == pytest.approx(_goalie_oracle((bx, by)), abs=1e-9)


def test_goalie_clears_when_it_can_kick():
    w = make_world(CFG, [(4.0, 0.0, math.pi, 1)], ball=(3.75, 0.0))
    assert scripted_goalie(w, 0, CFG).kind is SkillKind.WALK_AND_KICK
    assert scripted_goalie(w, 0, CFG, weakened=True).kind is SkillKind.WALK_TO_POINT


@pytest.mark.parametrize("script", [scripted_goalie, scripted_defender])
def test_weakened_scripts_never_kick(script):
    rng = np.random.default_rng(0)
    w = make_world(CFG, [(3.0, 0.0, math.pi, 1), (-1.0, 0.0, 0.0, 0)], ball=(2.0, 0.3))
    sim = Simulator(CFG, w)
    from rlsoccer.skills import SkillCommand

    for t in range(1200):
        cmd = script(w, 0, CFG, weakened=True)
        assert cmd.kind is not SkillKind.WALK_AND_KICK
        events = sim.step([cmd, SkillCommand.walk_and_kick(rng.uniform(-1, 1))])
        assert not any(e.kind is EventKind.KICK_EXECUTED and e.detail["robot"] == 0 for e in events)
        if any(e.kind is not EventKind.KICK_EXECUTED for e in events):
            w.ball_pos[:] = rng.uniform(-2, 3, 2) * (1, 0.8)
            w.ball_vel[:] = 0


def _perp_offset(p, a, b):
    ax, ay = a
    bx, by = b
    px, py = p
    return abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / math.hypot(bx - ax, by - ay)


@pytest.mark.parametrize("start,ball", [((4.0, 2.0, 0.0), (0.0, 0.0)), ((1.0, -2.5, 1.0), (0.0, 0.0)),
                                        ((3.5, 0.0, math.pi), (-1.0, 1.5))])
def test_defender_converges_and_blocks(start, ball):
    w = make_world(CFG, [(*start, 1)], ball=ball)
    target = defender_target(w, 0, GEO)
    # oracle: 0.5 m ball-side of the ball/goal midpoint
    g = np.array([4.5, 0.0])
    b = np.array(ball)
    u = (b - g) / np.linalg.norm(b - g)
    assert target == pytest.approx(tuple((g + b) / 2 + 0.5 * u))
    sim = Simulator(CFG, w)
    for t in range(int(30 / CFG.dt)):
        sim.step([scripted_defender(w, 0, CFG, weakened=True)])
        if math.dist(w.pose[0, :2], target) <= CFG.arrival_radius:
            break
    else:
        pytest.fail("defender did not converge in 30 s")
    assert _perp_offset(w.pose[0, :2], ball, (4.5, 0.0)) < 0.3


def _policies(seed=0, dims=None):
    return {n: MlpPolicy(SPECS[n].obs_dim, SPECS[n].act_dim, seed=seed + i) for i, n in enumerate(PolicyName)}


def test_bundle_dimension_mismatch_at_load():
    pols = _policies()
    pols[PolicyName.NEAR_GOAL] = MlpPolicy(24, 3, seed=0)
    with pytest.raises(DimensionMismatch):
        make_bundle(0, pols)


def test_bundle_missing_weights():
    pols = _policies()
    del pols[PolicyName.POSITIONING]
    with pytest.raises(FileNotFoundError):
        make_bundle(0, pols)
    make_bundle(0, pols, SelectorConfig(disabled=frozenset({PolicyName.POSITIONING})))


def _team_world():
    return make_world(CFG, [(-1.0, 0.0, 0.0, 0), (-2.5, 1.0, 0.0, 0), (1.0, 0.0, math.pi, 1)], ball=(0.0, 0.0))


def test_run_team_tick_deterministic_and_logged():
    out = []
    for _ in range(2):
        roster = [make_bundle(0, _policies()), make_bundle(1, _policies())]
        cmds, log = run_team_tick(_team_world(), roster, CFG)
        out.append(({k: v.to_dict() for k, v in cmds.items()}, [d.to_dict() for d in log]))
    assert out[0] == out[1]
    assert [d["robot_id"] for d in out[0][1]] == [0, 1]


def test_one_ball_player_one_positioner():
    roster = [make_bundle(0, _policies()), make_bundle(1, _policies())]
    _, log = run_team_tick(_team_world(), roster, CFG)
    chosen = {d.robot_id: d.chosen for d in log}
    assert chosen[1] is PolicyName.POSITIONING and chosen[0] is not PolicyName.POSITIONING


def test_fallen_robot_skipped():
    w = _team_world()
    w.upright[1] = 0
    roster = [make_bundle(0, _policies()), make_bundle(1, _policies())]
    cmds, log = run_team_tick(w, roster, CFG)
    assert set(cmds) == {0} and len(log) == 1


def test_high_fidelity_uses_noisy_estimate():
    high = SimConfig().with_fidelity("HIGH")
    w = _team_world()
    roster = [make_bundle(0, _policies())]
    rngs = {0: SimRng(1).obs(0)}
    _, log = run_team_tick(w, roster, high, rngs)
    assert log[0].inputs["self_to_ball"] != pytest.approx(1.0, abs=1e-12)
