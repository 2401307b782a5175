"""Evaluation experiments, bootstrap intervals and report assembly."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .behavior import (SelectorConfig, defender_target, goalie_target, make_bundle,
                       run_team_tick, scripted_defender, scripted_goalie)
from .geometry import BallState, FieldGeometry, Pose2D, RobotState, Team, WorldState, goal_center
from .policy_io import ActionMemory, PolicyName, SPECS, build_observation, decode_action
from .ppo import MlpPolicy, file_hash
from .rewards import RewardConfig, Terminal, is_terminal
from .simulator import SimConfig, SimRng, Simulator, stream_seed
from .skills import SkillCommand
from .replay import tick_state


class ExperimentName(str, enum.Enum):
    DECOMPOSITION_1V2 = "DECOMPOSITION_1V2"
    FIDELITY_NEARGOAL = "FIDELITY_NEARGOAL"
    ACTIONSPACE_DRIBBLE = "ACTIONSPACE_DRIBBLE"
    ACTIONSPACE_WALKTIME = "ACTIONSPACE_WALKTIME"


DECOMPOSITION_CONDITIONS = {
    "full": (),
    "no-midfield": (PolicyName.MID_FIELD,),
    "no-nearGoal": (PolicyName.NEAR_GOAL,),
    "no-ballDuel": (PolicyName.BALL_DUEL,),
}

WEIGHT_FILES = {
    "MID_FIELD": "mid_field.rlsw",
    "BALL_DUEL": "ball_duel.rlsw",
    "NEAR_GOAL": "near_goal_high.rlsw",  # the suite deploys NEAR_GOAL as trained, in HIGH
    "NEAR_GOAL_LOW": "near_goal.rlsw",
    "NEAR_GOAL_HIGH": "near_goal_high.rlsw",
    "POSITIONING": "positioning.rlsw",
}


# --- bootstrap ---------------------------------------------------------------

def bootstrap_ci(successes, resamples: int = 10_000, level: float = 0.95, seed: int = 0):
    """Percentile bootstrap of the mean: returns (mean, lo, hi)."""
    # sorted so neither the estimate nor the interval depends on episode order
    x = np.sort(np.asarray(successes, dtype=np.float64).reshape(-1))
    if x.size == 0:
        raise ValueError("bootstrap_ci needs at least one outcome")
    if resamples < 1000:
        raise ValueError("resamples must be >= 1000")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    mean = float(x.mean())
    if np.all(x == x[0]):
        return (mean, mean, mean)
    rng = np.random.default_rng(seed)
    n = x.size
    # for 0/1 outcomes the resample sum is binomial; the general path covers other scores
    if np.all((x == 0) | (x == 1)):
        means = rng.binomial(n, mean, size=resamples) / n
    else:
        means = x[rng.integers(0, n, size=(resamples, n))].mean(1)
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return (mean, float(lo), float(hi))


# --- episode runner --------------------------------------------------------------

@dataclass
class EpisodeOutcome:
    index: int
    success: bool
    terminal: str
    time: float
    trace: list | None = None


@dataclass
class Agent:
    """How HOME robot 0 is controlled during an evaluation episode."""

    kind: str  # "suite", "policy" or "walk_to_point"
    policies: dict = field(default_factory=dict)
    selector: SelectorConfig = SelectorConfig()
    policy_name: PolicyName | None = None


def _robot(x, y, th, team, i) -> RobotState:
    return RobotState(pose=Pose2D(x, y, th), team=team, id=i)


def _possession(rng, geo: FieldGeometry, x_range, y_range, heading_jitter=0.5):
    """Attacker pose with the ball just in front of it, facing roughly at the goal."""
    x = rng.uniform(*x_range)
    y = rng.uniform(*y_range)
    gx, gy = goal_center(geo, Team.HOME)
    th = math.atan2(gy - y, gx - x) + rng.uniform(-heading_jitter, heading_jitter)
    d = geo.robot_half_length + geo.ball_radius + 0.05
    return (x, y, th), (x + d * math.cos(th), y + d * math.sin(th))


def _place_opponent(world_ball, target_fn, geo, rng, jitter, i, team=Team.AWAY):
    probe = WorldState.from_parts([_robot(0, 0, 0, team, 0)], BallState(position=world_ball))
    tx, ty = target_fn(probe, 0, geo)
    tx += rng.uniform(-jitter, jitter)
    ty += rng.uniform(-jitter, jitter)
    face = math.atan2(world_ball[1] - ty, world_ball[0] - tx)
    return _robot(tx, ty, face, team, i)


def spawn_decomposition(rng, geo: FieldGeometry) -> WorldState:
    (x, y, th), ball = _possession(rng, geo, (-2.5, -0.5), (-1.5, 1.5))
    robots = [
        _robot(x, y, th, Team.HOME, 0),
        _place_opponent(ball, defender_target, geo, rng, 0.3, 1),
        _place_opponent(ball, goalie_target, geo, rng, 0.1, 2),
    ]
    return WorldState.from_parts(robots, BallState(position=ball))


def spawn_fidelity(rng, geo: FieldGeometry, with_defender: bool) -> WorldState:
    hl = geo.half_length
    bx = rng.uniform(hl - geo.goal_box_depth, hl - 0.3)
    by = rng.uniform(-0.5 * geo.goal_box_width + 0.3, 0.5 * geo.goal_box_width - 0.3)
    gx, gy = goal_center(geo, Team.HOME)
    th = math.atan2(gy - by, gx - bx) + rng.uniform(-0.5, 0.5)
    d = geo.robot_half_length + geo.ball_radius + 0.05
    ball = (bx, by)
    robots = [_robot(bx - d * math.cos(th), by - d * math.sin(th), th, Team.HOME, 0),
              _place_opponent(ball, goalie_target, geo, rng, 0.1, 1)]
    if with_defender:
        robots.append(_place_opponent(ball, defender_target, geo, rng, 0.2, 2))
    return WorldState.from_parts(robots, BallState(position=ball))


def spawn_dribble(rng, geo: FieldGeometry) -> WorldState:
    (x, y, th), ball = _possession(rng, geo, (-2.0, 0.0), (-1.5, 1.5), heading_jitter=0.3)
    # defender squarely in the way, 1.0-1.5 m ahead of the ball
    gx, gy = goal_center(geo, Team.HOME)
    a = math.atan2(gy - ball[1], gx - ball[0])
    r = rng.uniform(1.0, 1.5)
    dx, dy = ball[0] + r * math.cos(a), ball[1] + r * math.sin(a)
    robots = [_robot(x, y, th, Team.HOME, 0), _robot(dx, dy, a + math.pi, Team.AWAY, 1)]
    return WorldState.from_parts(robots, BallState(position=ball))


def spawn_walk(rng, geo: FieldGeometry, distance: float) -> tuple[WorldState, tuple[float, float]]:
    x = rng.uniform(-2.0, 2.0)
    y = rng.uniform(-1.5, 1.5)
    th = rng.uniform(-math.pi, math.pi)
    a = rng.uniform(-math.pi, math.pi)
    # pick a direction that keeps the marker inside the field
    for _ in range(100):
        tx, ty = x + distance * math.cos(a), y + distance * math.sin(a)
        if abs(tx) < geo.half_length - 0.3 and abs(ty) < geo.half_width - 0.3:
            break
        a = rng.uniform(-math.pi, math.pi)
    # the ball sits far off the field and never interacts
    world = WorldState.from_parts([_robot(x, y, th, Team.HOME, 0)],
                                  BallState(position=(0.0, geo.half_width + 0.9)))
    return world, (tx, ty)


@dataclass
class EpisodeSetup:
    world: WorldState
    agent: Agent
    opponents: dict  # robot id -> (script, weakened)
    config: SimConfig
    timeout: float
    mode: str = "goal"  # "goal", "dribble" or "walk"
    target: tuple | None = None


def _agent_command(agent: Agent, world: WorldState, config: SimConfig, rng: SimRng, state: dict, decisions: list):
    if agent.kind == "suite":
        if "bundle" not in state:
            state["bundle"] = make_bundle(0, agent.policies, agent.selector)
        cmds, log = run_team_tick(world, [state["bundle"]], config, {0: rng.obs(0)})
        decisions.extend(log)
        return cmds.get(0)
    if agent.kind == "policy":
        spec = SPECS[agent.policy_name]
        memory = state.setdefault("memory", ActionMemory())
        obs = build_observation(spec, world, 0, config, rng.obs(0))
        return decode_action(spec, agent.policies[agent.policy_name].act_mean(obs), world.pose[0], config, memory)
    raise ValueError(agent.kind)


def run_episode(setup: EpisodeSetup, seed: int, index: int = 0, record: bool = False) -> EpisodeOutcome:
    """Play one evaluation episode to its terminal condition."""
    config = setup.config
    world = setup.world
    rng = SimRng(seed)
    sim = Simulator(config, world, rng)
    reward_cfg = RewardConfig(episode_timeout=setup.timeout)
    state: dict = {}
    trace = [] if record else None
    far_since = None
    dt = config.dt
    while True:
        decisions: list = []
        commands = [None] * world.n_robots
        if setup.mode == "walk":
            commands[0] = _walk_command(setup, world, config, rng, state)
        elif world.upright[0]:
            commands[0] = _agent_command(setup.agent, world, config, rng, state, decisions)
        for rid, (script, weakened) in setup.opponents.items():
            if world.upright[rid]:
                commands[rid] = script(world, rid, config, weakened)
        events = sim.step(commands)
        elapsed = world.tick * dt
        if record:
            trace.append({
                "tick": world.tick,
                **tick_state(world),
                "events": [e.to_dict() for e in events],
                "commands": [None if c is None else c.to_dict() for c in commands],
                "decisions": [d.to_dict() for d in decisions],
            })
        if setup.mode == "walk":
            tx, ty = setup.target
            if math.hypot(world.pose[0, 0] - tx, world.pose[0, 1] - ty) <= WALK_ARRIVAL:
                return EpisodeOutcome(index, True, "ARRIVED", elapsed, trace)
            if elapsed >= setup.timeout - 1e-9:
                return EpisodeOutcome(index, False, Terminal.TIMEOUT.value, elapsed, trace)
            continue
        if setup.mode == "dribble":
            bx, by = world.ball_pos
            ax, ay = world.pose[0, 0], world.pose[0, 1]
            close = math.hypot(bx - ax, by - ay) <= DRIBBLE_CONTROL_RADIUS
            if bx > world.pose[1, 0] + DRIBBLE_PAST_MARGIN and close:
                return EpisodeOutcome(index, True, "PASSED", elapsed, trace)
            if close:
                far_since = None
            elif far_since is None:
                far_since = elapsed
            elif elapsed - far_since >= DRIBBLE_LOSS_TIME - 1e-9:
                return EpisodeOutcome(index, False, "LOST_CONTROL", elapsed, trace)
        term = is_terminal(world, events, elapsed, reward_cfg, Team.HOME)
        if term is not Terminal.RUNNING:
            return EpisodeOutcome(index, setup.mode == "goal" and term is Terminal.GOAL, term.value, elapsed, trace)


WALK_DISTANCE = 4.0
WALK_ARRIVAL = 0.2
DRIBBLE_CONTROL_RADIUS = 1.5
DRIBBLE_LOSS_TIME = 5.0
DRIBBLE_PAST_MARGIN = 0.0


def _walk_command(setup: EpisodeSetup, world, config, rng, state):
    tx, ty = setup.target
    if setup.agent.kind == "walk_to_point":
        face = math.atan2(ty - world.pose[0, 1], tx - world.pose[0, 0])
        return SkillCommand.to_point((tx, ty), face)
    # velocity policy chasing a phantom ball at the marker
    spec = SPECS[setup.agent.policy_name]
    ghost = world.copy()
    ghost.ball_pos[:] = (tx, ty)
    ghost.ball_hist[:] = (tx, ty)
    obs = build_observation(spec, ghost, 0, config, rng.obs(0))
    memory = state.setdefault("memory", ActionMemory())
    return decode_action(spec, setup.agent.policies[setup.agent.policy_name].act_mean(obs), world.pose[0], config,
                         memory)


# --- experiments -----------------------------------------------------------------

@dataclass
class ConditionResult:
    name: str
    successes: int
    episodes: int
    rate: float
    ci_lo: float
    ci_hi: float
    half_width: float
    mean_time_to_success: float | None
    mean_time: float
    terminals: dict

    @classmethod
    def from_outcomes(cls, name: str, outcomes: list[EpisodeOutcome], seed: int) -> "ConditionResult":
        flags = [o.success for o in outcomes]
        mean, lo, hi = bootstrap_ci(flags, seed=seed)
        times = [o.time for o in outcomes if o.success]
        terminals: dict[str, int] = {}
        for o in outcomes:
            terminals[o.terminal] = terminals.get(o.terminal, 0) + 1
        return cls(name, sum(flags), len(flags), mean, lo, hi, 0.5 * (hi - lo),
                   float(np.mean(times)) if times else None, float(np.mean([o.time for o in outcomes])),
                   dict(sorted(terminals.items())))


@dataclass
class EvalReport:
    experiment: str
    episodes: int
    seed: int
    conditions: dict
    config: dict
    weights: dict
    notes: dict = field(default_factory=dict)
    report_hash: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def compute_hash(self) -> str:
        d = self.to_dict()
        d.pop("report_hash")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def finalize(self) -> "EvalReport":
        self.report_hash = self.compute_hash()
        return self

    def table(self) -> str:
        lines = [f"{self.experiment}  episodes={self.episodes} seed={self.seed}",
                 f"{'condition':<24}{'success':>10}{'rate':>8}{'95% CI':>18}{'t_success':>11}"]
        for c in self.conditions.values():
            t = "-" if c.mean_time_to_success is None else f"{c.mean_time_to_success:.1f}s"
            lines.append(f"{c.name:<24}{c.successes:>5}/{c.episodes:<4}{c.rate:>8.3f}"
                         f"   [{c.ci_lo:.3f}, {c.ci_hi:.3f}]{t:>11}")
        for k, v in self.notes.items():
            lines.append(f"{k}: {v}")
        lines.append(f"report hash {self.report_hash}")
        return "\n".join(lines)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str))


def load_weights(weights_dir, names) -> tuple[dict, dict]:
    """Load policies by key (see WEIGHT_FILES); returns (policies, hashes)."""
    base = Path(weights_dir)
    policies, hashes = {}, {}
    for key in names:
        path = base / WEIGHT_FILES[key]
        if not path.exists():
            raise FileNotFoundError(f"missing weights for {key}: {path}")
        pol = MlpPolicy.load(path)
        expected = key.replace("_LOW", "").replace("_HIGH", "")
        spec = SPECS[PolicyName(expected)]
        if (pol.obs_dim, pol.act_dim) != (spec.obs_dim, spec.act_dim):
            raise ValueError(f"{path}: dims {pol.obs_dim}->{pol.act_dim} do not match {expected}")
        policies[key] = pol
        hashes[key] = file_hash(path)
    return policies, hashes


def episode_seed(seed: int, stream: int, index: int) -> int:
    return int(stream_seed(seed, 6, stream, index).generate_state(1, np.uint64)[0])


def _spawn_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    # spawns depend on the experiment, not the condition, so conditions face identical starts
    return np.random.Generator(np.random.PCG64(stream_seed(seed, 3, 1000 + stream, index)))


EXPERIMENT_CONDITIONS = {
    ExperimentName.DECOMPOSITION_1V2: tuple(DECOMPOSITION_CONDITIONS),
    ExperimentName.FIDELITY_NEARGOAL: ("trained-LOW/eval-LOW", "trained-HIGH/eval-LOW",
                                       "trained-LOW/eval-HIGH", "trained-HIGH/eval-HIGH"),
    ExperimentName.ACTIONSPACE_DRIBBLE: ("dribble/velocity", "dribble/point"),
    ExperimentName.ACTIONSPACE_WALKTIME: ("walk/velocity", "walk/point"),
}

EXPERIMENT_WEIGHTS = {
    ExperimentName.DECOMPOSITION_1V2: ("MID_FIELD", "BALL_DUEL", "NEAR_GOAL", "POSITIONING"),
    ExperimentName.FIDELITY_NEARGOAL: ("NEAR_GOAL_LOW", "NEAR_GOAL_HIGH"),
    ExperimentName.ACTIONSPACE_DRIBBLE: ("BALL_DUEL", "MID_FIELD"),
    ExperimentName.ACTIONSPACE_WALKTIME: ("BALL_DUEL",),
}

DEFAULT_FIDELITY = {
    ExperimentName.DECOMPOSITION_1V2: "HIGH",
    ExperimentName.ACTIONSPACE_DRIBBLE: "LOW",
    ExperimentName.ACTIONSPACE_WALKTIME: "LOW",
}


def build_setup(experiment, condition: str, index: int, seed: int, policies: dict, config: SimConfig | None = None,
                selector: SelectorConfig | None = None, scenario: str = "GOALIE") -> tuple[EpisodeSetup, int]:
    """Episode ``index`` of one experiment condition; returns (setup, simulator seed).

    ``policies`` maps WEIGHT_FILES keys to loaded policies. ``config`` fidelity
    is overridden by the experiment (or, for the fidelity experiment, by the
    condition's evaluation fidelity).
    """
    exp = ExperimentName(experiment)
    if condition not in EXPERIMENT_CONDITIONS[exp]:
        raise ValueError(f"unknown condition {condition!r} for {exp.value}")
    base = config or SimConfig()
    if exp is ExperimentName.DECOMPOSITION_1V2:
        cfg = base.with_fidelity(DEFAULT_FIDELITY[exp]) if config is None else base
        disabled = DECOMPOSITION_CONDITIONS[condition]
        sel = replace(selector or SelectorConfig(), disabled=frozenset(disabled))
        pols = {PolicyName(k): policies[k] for k in EXPERIMENT_WEIGHTS[exp] if PolicyName(k) not in disabled}
        world = spawn_decomposition(_spawn_rng(seed, 0, index), cfg.geometry)
        setup = EpisodeSetup(world, Agent("suite", pols, sel),
                             {1: (scripted_defender, True), 2: (scripted_goalie, True)}, cfg, 60.0)
        return setup, episode_seed(seed, 0, index)
    if exp is ExperimentName.FIDELITY_NEARGOAL:
        if scenario not in ("GOALIE", "GOALIE_DEFENDER"):
            raise ValueError(f"unknown fidelity scenario {scenario}")
        trained, evalf = (part.split("-")[1] for part in condition.split("/"))
        cfg = base.with_fidelity(evalf)
        with_def = scenario == "GOALIE_DEFENDER"
        agent = Agent("policy", {PolicyName.NEAR_GOAL: policies[f"NEAR_GOAL_{trained}"]},
                      policy_name=PolicyName.NEAR_GOAL)
        opps = {1: (scripted_goalie, False)}
        if with_def:
            opps[2] = (scripted_defender, False)
        world = spawn_fidelity(_spawn_rng(seed, 1, index), cfg.geometry, with_def)
        return EpisodeSetup(world, agent, opps, cfg, 60.0), episode_seed(seed, 1 + (evalf == "HIGH"), index)
    cfg = base.with_fidelity(DEFAULT_FIDELITY[exp]) if config is None else base
    velocity = Agent("policy", {PolicyName.BALL_DUEL: policies.get("BALL_DUEL")}, policy_name=PolicyName.BALL_DUEL)
    if exp is ExperimentName.ACTIONSPACE_DRIBBLE:
        agent = velocity if condition == "dribble/velocity" else Agent(
            "policy", {PolicyName.MID_FIELD: policies["MID_FIELD"]}, policy_name=PolicyName.MID_FIELD)
        world = spawn_dribble(_spawn_rng(seed, 2, index), cfg.geometry)
        return (EpisodeSetup(world, agent, {1: (scripted_defender, True)}, cfg, 60.0, mode="dribble"),
                episode_seed(seed, 3, index))
    agent = velocity if condition == "walk/velocity" else Agent("walk_to_point")
    world, target = spawn_walk(_spawn_rng(seed, 3, index), cfg.geometry, WALK_DISTANCE + WALK_ARRIVAL)
    return (EpisodeSetup(world, agent, {}, cfg, 60.0, mode="walk", target=target), episode_seed(seed, 4, index))


def _run_all(jobs, workers: int) -> list[EpisodeOutcome]:
    """Run (setup, seed, index) jobs, optionally in a process pool; output ordered by job."""
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_job, jobs, chunksize=8))
    return [_run_job(j) for j in jobs]


def _run_job(job) -> EpisodeOutcome:
    setup, seed, index = job
    return run_episode(setup, seed, index)


def run_conditions(experiment, episodes: int, weights_dir, seed: int = 0, config: SimConfig | None = None,
                   selector: SelectorConfig | None = None, conditions=None, workers: int = 0,
                   scenario: str = "GOALIE") -> EvalReport:
    """Run every condition of an experiment and assemble the report."""
    exp = ExperimentName(experiment)
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    policies, hashes = load_weights(weights_dir, EXPERIMENT_WEIGHTS[exp])
    results = {}
    used = None
    for cname in conditions or EXPERIMENT_CONDITIONS[exp]:
        jobs = []
        for i in range(episodes):
            setup, sim_seed = build_setup(exp, cname, i, seed, policies, config, selector, scenario)
            used = setup.config
            jobs.append((setup, sim_seed, i))
        results[cname] = ConditionResult.from_outcomes(cname, _run_all(jobs, workers), seed)
    snapshot = {"sim": _plain_config(used), "selector": _plain_config(selector or SelectorConfig())}
    notes = {}
    if exp is ExperimentName.FIDELITY_NEARGOAL:
        notes["scenario"] = scenario
        snapshot["sim"]["fidelity"] = "per condition"
    if exp is ExperimentName.ACTIONSPACE_WALKTIME:
        notes["kinematic_lower_bound_s"] = WALK_DISTANCE / used.max_linear_speed
    report = EvalReport(exp.value, episodes, seed, results, snapshot, hashes, notes)
    return report.finalize()


def _plain_config(obj) -> dict:
    from .config import _plain

    return _plain(obj)


def run_decomposition(episodes: int, weights_dir, seed: int = 0, **kw) -> EvalReport:
    return run_conditions(ExperimentName.DECOMPOSITION_1V2, episodes, weights_dir, seed, **kw)


def run_fidelity(episodes: int, weights_dir, seed: int = 0, scenario: str = "GOALIE", **kw) -> EvalReport:
    return run_conditions(ExperimentName.FIDELITY_NEARGOAL, episodes, weights_dir, seed, scenario=scenario, **kw)


def run_actionspace(episodes: int, weights_dir, seed: int = 0, **kw) -> tuple[EvalReport, EvalReport]:
    """Dribble and walk-time tests; returns both reports."""
    return (run_conditions(ExperimentName.ACTIONSPACE_DRIBBLE, episodes, weights_dir, seed, **kw),
            run_conditions(ExperimentName.ACTIONSPACE_WALKTIME, episodes, weights_dir, seed, **kw))


def record_episode(experiment, condition: str, index: int, seed: int, weights_dir, path,
                   config: SimConfig | None = None, scenario: str = "GOALIE") -> EpisodeOutcome:
    """Play one evaluation episode and write its JSON-lines trace."""
    from .replay import export_trace

    exp = ExperimentName(experiment)
    policies, hashes = load_weights(weights_dir, EXPERIMENT_WEIGHTS[exp])
    setup, sim_seed = build_setup(exp, condition, index, seed, policies, config, scenario=scenario)
    initial = setup.world.copy()
    outcome = run_episode(setup, sim_seed, index, record=True)
    export_trace(path, setup.config, sim_seed, initial, outcome.trace, setup.world,
                 meta={"experiment": exp.value, "condition": condition, "index": index, "seed": seed,
                       "terminal": outcome.terminal, "success": outcome.success, "weights": hashes})
    return outcome
