import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exact_bootstrap_quantiles
from rlsoccer.evaluation import (DECOMPOSITION_CONDITIONS, EXPERIMENT_CONDITIONS, WALK_DISTANCE, Agent, EpisodeSetup,
                                 ExperimentName, bootstrap_ci, build_setup, load_weights, run_conditions, run_episode,
                                 spawn_decomposition, spawn_dribble, spawn_fidelity, spawn_walk)
from rlsoccer.geometry import FieldGeometry, Pose2D, RobotState, Team, WorldState, BallState, in_opposing_goal_box
from rlsoccer.behavior import scripted_defender
from rlsoccer.simulator import SimConfig

GEO = FieldGeometry()


def test_bootstrap_degenerate():
    assert bootstrap_ci([0] * 10) == (0.0, 0.0, 0.0)
    assert bootstrap_ci([1] * 10) == (1.0, 1.0, 1.0)


def test_bootstrap_matches_exact_enumeration():
    x = [1] * 6 + [0] * 4
    mean, lo, hi = bootstrap_ci(x, resamples=10_000, seed=0)
    elo, ehi, support, probs = exact_bootstrap_quantiles(x)
    assert mean == 0.6
    assert abs(0.5 * (hi - lo) - 0.5 * (ehi - elo)) <= 0.05
    assert math.isclose(probs.sum(), 1.0, rel_tol=1e-9)


def test_exact_oracle_agrees_with_binomial_law():
    # independent check of the oracle itself: resampled success counts are Binomial(10, 0.6)
    _, _, support, probs = exact_bootstrap_quantiles([1] * 6 + [0] * 4)
    binom = [math.comb(10, k) * 0.6 ** k * 0.4 ** (10 - k) for k in range(11)]
    assert np.allclose(probs, binom, atol=1e-12)


def test_bootstrap_general_scores_path():
    x = np.linspace(0, 1, 25)
    mean, lo, hi = bootstrap_ci(x, seed=1)
    assert mean == x.mean() and lo < mean < hi


@given(st.lists(st.booleans(), min_size=1, max_size=60), st.randoms(use_true_random=False))
@settings(max_examples=50, deadline=None)
def test_bootstrap_mean_exact_and_relabel_invariant(flags, rnd):
    mean, lo, hi = bootstrap_ci(flags)
    assert mean == sum(flags) / len(flags)
    assert 0.0 <= lo <= mean <= hi <= 1.0
    shuffled = list(flags)
    rnd.shuffle(shuffled)
    assert bootstrap_ci(shuffled) == (mean, lo, hi)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.randoms(use_true_random=False))
@settings(max_examples=30, deadline=None)
def test_bootstrap_relabel_invariant_scores(x, rnd):
    y = list(x)
    rnd.shuffle(y)
    assert bootstrap_ci(x, resamples=1000) == bootstrap_ci(y, resamples=1000)


@pytest.mark.parametrize("kw", [{"successes": []}, {"successes": [1, 0], "resamples": 10},
                                {"successes": [1, 0], "level": 1.0}])
def test_bootstrap_errors(kw):
    with pytest.raises(ValueError):
        bootstrap_ci(**kw)


@pytest.mark.parametrize("seed", range(20))
def test_decomposition_spawn_possession(seed):
    w = spawn_decomposition(np.random.default_rng(seed), GEO)
    assert list(w.team) == [0, 1, 1]
    ball = w.ball_pos
    x, y, th = w.pose[0]
    lx = math.cos(th) * (ball[0] - x) + math.sin(th) * (ball[1] - y)
    assert 0 < lx < 0.4 and math.dist((x, y), ball) < 0.4  # ball at the attacker's feet


@pytest.mark.parametrize("seed", range(20))
def test_fidelity_spawn_in_box(seed):
    w = spawn_fidelity(np.random.default_rng(seed), GEO, with_defender=seed % 2 == 0)
    assert in_opposing_goal_box(GEO, Team.HOME, tuple(w.ball_pos))
    assert w.n_robots == (3 if seed % 2 == 0 else 2)


@pytest.mark.parametrize("seed", range(20))
def test_walk_spawn_distance(seed):
    w, target = spawn_walk(np.random.default_rng(seed), GEO, 4.2)
    assert math.dist(w.pose[0, :2], target) == pytest.approx(4.2)
    assert abs(target[0]) < 4.5 and abs(target[1]) < 3.0


def test_dribble_success_when_ball_past_defender():
    robots = [RobotState(Pose2D(0.0, 0.0, 0.0), team=Team.HOME, id=0),
              RobotState(Pose2D(-0.5, 1.0, 0.0), team=Team.AWAY, id=1)]
    w = WorldState.from_parts(robots, BallState((0.3, 0.0)))
    setup = EpisodeSetup(w, Agent("walk_to_point"), {1: (scripted_defender, True)}, SimConfig(), 60.0,
                         mode="dribble")
    setup.agent = Agent("policy")
    # the agent never gets to act: success is decided after the first tick
    from rlsoccer.ppo import MlpPolicy
    from rlsoccer.policy_io import PolicyName

    setup.agent = Agent("policy", {PolicyName.BALL_DUEL: MlpPolicy.for_policy("BALL_DUEL")},
                        policy_name=PolicyName.BALL_DUEL)
    out = run_episode(setup, 0)
    assert out.success and out.terminal == "PASSED"


def test_dribble_control_loss():
    from rlsoccer.ppo import MlpPolicy
    from rlsoccer.policy_io import PolicyName

    robots = [RobotState(Pose2D(-3.0, 0.0, 0.0), team=Team.HOME, id=0),
              RobotState(Pose2D(3.0, 2.0, 0.0), team=Team.AWAY, id=1)]
    w = WorldState.from_parts(robots, BallState((0.0, 0.0)))
    pol = MlpPolicy.for_policy("BALL_DUEL")
    pol.params[:] = 0.0  # stands still
    setup = EpisodeSetup(w, Agent("policy", {PolicyName.BALL_DUEL: pol}, policy_name=PolicyName.BALL_DUEL),
                         {1: (scripted_defender, True)}, SimConfig(), 60.0, mode="dribble")
    out = run_episode(setup, 0)
    # separation first observed after tick 1, loss declared 5 s later
    assert out.terminal == "LOST_CONTROL" and out.time == pytest.approx(0.05 + 5.0)


def test_walk_to_point_beats_kinematic_bound(random_weights):
    rep = run_conditions(ExperimentName.ACTIONSPACE_WALKTIME, 5, random_weights, conditions=["walk/point"])
    c = rep.conditions["walk/point"]
    assert c.successes == 5
    assert c.mean_time_to_success > WALK_DISTANCE / 0.3
    assert rep.notes["kinematic_lower_bound_s"] == pytest.approx(13.333, abs=1e-3)


@pytest.mark.parametrize("exp", list(ExperimentName))
def test_reports_deterministic_and_well_formed(exp, random_weights):
    a = run_conditions(exp, 2, random_weights, seed=3)
    b = run_conditions(exp, 2, random_weights, seed=3)
    assert a.report_hash == b.report_hash and len(a.report_hash) == 64
    assert list(a.conditions) == list(EXPERIMENT_CONDITIONS[exp])
    for c in a.conditions.values():
        assert 0 <= c.successes <= c.episodes == 2
        assert 0.0 <= c.ci_lo <= c.rate <= c.ci_hi <= 1.0
    assert set(a.weights) and all(len(h) == 40 for h in a.weights.values())
    assert "sim" in a.config and a.table().count("\n") >= 3


def test_parallel_workers_match_serial(random_weights):
    a = run_conditions(ExperimentName.DECOMPOSITION_1V2, 4, random_weights, conditions=["full"])
    b = run_conditions(ExperimentName.DECOMPOSITION_1V2, 4, random_weights, conditions=["full"], workers=2)
    assert a.report_hash == b.report_hash


def test_zero_episodes_rejected(random_weights):
    with pytest.raises(ValueError):
        run_conditions(ExperimentName.DECOMPOSITION_1V2, 0, random_weights)


def test_missing_weights(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_conditions(ExperimentName.DECOMPOSITION_1V2, 1, tmp_path)


def test_conditions_share_spawns(random_weights):
    pols, _ = load_weights(random_weights, ["MID_FIELD", "BALL_DUEL", "NEAR_GOAL", "POSITIONING"])
    worlds = [build_setup(ExperimentName.DECOMPOSITION_1V2, c, 7, 0, pols)[0].world for c in DECOMPOSITION_CONDITIONS]
    assert all(w.same_as(worlds[0]) for w in worlds)


def test_ablation_disables_policy(random_weights):
    pols, _ = load_weights(random_weights, ["MID_FIELD", "BALL_DUEL", "NEAR_GOAL", "POSITIONING"])
    setup, _ = build_setup(ExperimentName.DECOMPOSITION_1V2, "no-midfield", 0, 0, pols)
    from rlsoccer.policy_io import PolicyName

    assert PolicyName.MID_FIELD not in setup.agent.policies
    assert not setup.agent.selector.enabled(PolicyName.MID_FIELD)
    assert setup.config.fidelity.name.value == "HIGH"


def test_save_report(tmp_path, random_weights):
    import json

    rep = run_conditions(ExperimentName.ACTIONSPACE_WALKTIME, 1, random_weights)
    rep.save(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["report_hash"] == rep.report_hash and d["experiment"] == "ACTIONSPACE_WALKTIME"
