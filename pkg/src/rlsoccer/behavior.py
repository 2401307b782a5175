"""Deployment-side behavior: sub-policy selection and scripted robots."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .geometry import FieldGeometry, Team, WorldState, in_opposing_goal_box, own_goal_center, goal_center
from .policy_io import ActionMemory, PolicyName, SPECS, build_observation, decode_action
from .simulator import ConfigError, SimConfig
from .skills import SkillCommand, can_kick, walk_to_point


class Rule(str, enum.Enum):
    TEAMMATE_CLOSER = "TEAMMATE_CLOSER"
    BALL_IN_GOAL_BOX = "BALL_IN_GOAL_BOX"
    OPPONENT_NEAR_BALL = "OPPONENT_NEAR_BALL"
    DEFAULT = "DEFAULT"


RULE_POLICY = {
    Rule.TEAMMATE_CLOSER: PolicyName.POSITIONING,
    Rule.BALL_IN_GOAL_BOX: PolicyName.NEAR_GOAL,
    Rule.OPPONENT_NEAR_BALL: PolicyName.BALL_DUEL,
    Rule.DEFAULT: PolicyName.MID_FIELD,
}

# default policy when MID_FIELD is ablated, in order of preference
_FALLBACK_ORDER = (PolicyName.MID_FIELD, PolicyName.BALL_DUEL, PolicyName.NEAR_GOAL, PolicyName.POSITIONING)


@dataclass(frozen=True)
class SelectorConfig:
    ball_duel_opponent_radius: float = 0.5
    near_goal_margin: float = 0.0
    near_ball_radius: float = 1.0
    hysteresis_ticks: int = 5
    disabled: frozenset = frozenset()

    def validate(self, prefix: str = "selector") -> None:
        for key in ("ball_duel_opponent_radius", "near_ball_radius"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{prefix}.{key}", "must be > 0")
        if not (math.isfinite(self.near_goal_margin) and self.near_goal_margin >= 0):
            raise ConfigError(f"{prefix}.near_goal_margin", "must be >= 0")
        if int(self.hysteresis_ticks) != self.hysteresis_ticks or self.hysteresis_ticks < 0:
            raise ConfigError(f"{prefix}.hysteresis_ticks", "must be a non-negative integer")
        bad = [p for p in self.disabled if p not in {n.value for n in PolicyName} and p not in set(PolicyName)]
        if bad:
            raise ConfigError(f"{prefix}.disabled", f"unknown policies {bad}")
        if len({PolicyName(p) for p in self.disabled}) == len(PolicyName):
            raise ConfigError(f"{prefix}.disabled", "cannot disable every policy")

    def enabled(self, name: PolicyName) -> bool:
        return name not in {PolicyName(p) for p in self.disabled}


@dataclass(frozen=True)
class SelectorDecision:
    robot_id: int
    chosen: PolicyName
    rule_fired: Rule
    winner: PolicyName  # this tick's raw winner before hysteresis
    held: bool  # chosen was kept by hysteresis despite a different winner
    inputs: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "robot_id": self.robot_id, "chosen": self.chosen.value, "rule_fired": self.rule_fired.value,
            "winner": self.winner.value, "held": self.held, "inputs": self.inputs,
        }


def _d(ax, ay, bx, by) -> float:
    return math.hypot(ax - bx, ay - by)


def evaluate_rules(world: WorldState, self_id: int, config: SelectorConfig, geometry: FieldGeometry | None = None,
                   ball_estimate=None) -> tuple[PolicyName, Rule, dict]:
    """Stateless rule table; returns (policy, rule, inputs).

    ``ball_estimate`` is this robot's global ball estimate (true ball when None).
    A rule whose policy is disabled falls through to the next rule.
    """
    geo = geometry or FieldGeometry()
    if ball_estimate is None:
        bx, by = float(world.ball_pos[0]), float(world.ball_pos[1])
    else:
        bx, by = float(ball_estimate[0]), float(ball_estimate[1])
    team = int(world.team[self_id])
    sx, sy = float(world.pose[self_id, 0]), float(world.pose[self_id, 1])
    self_dist = _d(sx, sy, bx, by)
    mate_dist = math.inf
    opp_dist = math.inf
    for j in range(world.n_robots):
        if j == self_id:
            continue
        d = _d(float(world.pose[j, 0]), float(world.pose[j, 1]), bx, by)
        if world.team[j] == team:
            if world.upright[j] and d < mate_dist:
                mate_dist = d
        elif d < opp_dist:
            opp_dist = d
    in_box = in_opposing_goal_box(geo, Team(team), (bx, by), margin=config.near_goal_margin)
    inputs = {
        "self_to_ball": self_dist, "teammate_to_ball": mate_dist if math.isfinite(mate_dist) else None,
        "opponent_to_ball": opp_dist if math.isfinite(opp_dist) else None, "ball_in_goal_box": in_box,
    }
    if mate_dist < self_dist and config.enabled(PolicyName.POSITIONING):
        return PolicyName.POSITIONING, Rule.TEAMMATE_CLOSER, inputs
    if in_box and self_dist <= config.near_ball_radius and config.enabled(PolicyName.NEAR_GOAL):
        return PolicyName.NEAR_GOAL, Rule.BALL_IN_GOAL_BOX, inputs
    if opp_dist <= config.ball_duel_opponent_radius and config.enabled(PolicyName.BALL_DUEL):
        return PolicyName.BALL_DUEL, Rule.OPPONENT_NEAR_BALL, inputs
    for name in _FALLBACK_ORDER:
        if config.enabled(name):
            return name, Rule.DEFAULT, inputs
    raise ConfigError("selector.disabled", "cannot disable every policy")


@dataclass
class SelectorState:
    current: PolicyName | None = None
    candidate: PolicyName | None = None
    count: int = 0


def select(world: WorldState, self_id: int, config: SelectorConfig, geometry: FieldGeometry | None = None,
           state: SelectorState | None = None, ball_estimate=None) -> SelectorDecision:
    """Rule-table selection with optional hysteresis carried in ``state``."""
    winner, rule, inputs = evaluate_rules(world, self_id, config, geometry, ball_estimate)
    if state is None:
        return SelectorDecision(self_id, winner, rule, winner, False, inputs)
    if state.current is None or config.hysteresis_ticks == 0:
        state.current = winner
        state.candidate = None
        state.count = 0
    elif winner == state.current:
        state.candidate = None
        state.count = 0
    else:
        if winner == state.candidate:
            state.count += 1
        else:
            state.candidate = winner
            state.count = 1
        if state.count >= config.hysteresis_ticks:
            state.current = winner
            state.candidate = None
            state.count = 0
    return SelectorDecision(self_id, state.current, rule, winner, state.current != winner, inputs)


# --- scripted robots -------------------------------------------------------

@dataclass(frozen=True)
class ScriptConfig:
    goal_area_depth: float = 0.6
    goal_area_width: float = 2.2
    defender_offset: float = 0.5
    marker_speed_fraction: float = 0.5


def goalie_target(world: WorldState, robot_id: int, geometry: FieldGeometry, script: ScriptConfig = ScriptConfig()):
    """Point on the ball-to-own-goal segment, clamped to the goal area."""
    team = Team(int(world.team[robot_id]))
    gx, gy = own_goal_center(geometry, team)
    bx, by = float(world.ball_pos[0]), float(world.ball_pos[1])
    out = team.attack_sign  # direction from own goal into the field
    dx = bx - gx
    dy = by - gy
    dist = math.hypot(dx, dy)
    if dist < 1e-9 or dx * out <= 0:
        return (gx + out * script.goal_area_depth, gy)
    ux = dx / dist
    uy = dy / dist
    t = script.goal_area_depth / (ux * out)
    if abs(uy) > 1e-12:
        t = min(t, 0.5 * script.goal_area_width / abs(uy))
    t = min(t, dist)
    return (gx + ux * t, gy + uy * t)


def defender_target(world: WorldState, robot_id: int, geometry: FieldGeometry, script: ScriptConfig = ScriptConfig()):
    """Point ``defender_offset`` ball-side of the ball/own-goal midpoint, kept clear of the ball."""
    team = Team(int(world.team[robot_id]))
    gx, gy = own_goal_center(geometry, team)
    bx, by = float(world.ball_pos[0]), float(world.ball_pos[1])
    dx = bx - gx
    dy = by - gy
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        return (gx, gy)
    clear = geometry.robot_radius + geometry.ball_radius
    offset = min(script.defender_offset, max(0.0, 0.5 * dist - clear))
    k = (0.5 * dist + offset) / dist
    return (gx + dx * k, gy + dy * k)


def _clear_angle(world: WorldState, robot_id: int, geometry: FieldGeometry) -> float:
    # toward the middle of the field, away from our own goal
    team = Team(int(world.team[robot_id]))
    bx, by = float(world.ball_pos[0]), float(world.ball_pos[1])
    gx, gy = own_goal_center(geometry, team)
    return math.atan2(-by, -bx) if math.hypot(bx, by) > 0.5 else math.atan2(by - gy, bx - gx)


def _face_ball(world: WorldState, robot_id: int) -> float:
    return math.atan2(world.ball_pos[1] - world.pose[robot_id, 1], world.ball_pos[0] - world.pose[robot_id, 0])


def scripted_goalie(world: WorldState, robot_id: int, config: SimConfig, weakened: bool = False,
                    script: ScriptConfig = ScriptConfig()) -> SkillCommand:
    if not weakened and can_kick(world, robot_id, config):
        return SkillCommand.walk_and_kick(_clear_angle(world, robot_id, config.geometry))
    return SkillCommand.to_point(goalie_target(world, robot_id, config.geometry, script), _face_ball(world, robot_id))


def scripted_defender(world: WorldState, robot_id: int, config: SimConfig, weakened: bool = False,
                      script: ScriptConfig = ScriptConfig()) -> SkillCommand:
    if not weakened and can_kick(world, robot_id, config):
        return SkillCommand.walk_and_kick(_clear_angle(world, robot_id, config.geometry))
    return SkillCommand.to_point(defender_target(world, robot_id, config.geometry, script), _face_ball(world, robot_id))


def scripted_dribbler(world: WorldState, robot_id: int, config: SimConfig, weakened: bool = False,
                      script: ScriptConfig = ScriptConfig()) -> SkillCommand:
    """Walk-and-kick toward the opponent goal center."""
    gx, gy = goal_center(config.geometry, Team(int(world.team[robot_id])))
    return SkillCommand.walk_and_kick(math.atan2(gy - world.ball_pos[1], gx - world.ball_pos[0]))


def scripted_marker(world: WorldState, robot_id: int, config: SimConfig, weakened: bool = False,
                    script: ScriptConfig = ScriptConfig(), target_id: int = 0) -> SkillCommand:
    """Shadow robot ``target_id`` at a fraction of full speed."""
    tx, ty = float(world.pose[target_id, 0]), float(world.pose[target_id, 1])
    face = math.atan2(ty - world.pose[robot_id, 1], tx - world.pose[robot_id, 0])
    vx, vy, om = walk_to_point(world, robot_id, (tx, ty), face, config)
    k = script.marker_speed_fraction
    return SkillCommand.velocity(vx * k, vy * k, om, config.max_linear_speed, config.max_angular_speed)


SCRIPTS = {
    "goalie": scripted_goalie,
    "defender": scripted_defender,
    "dribbler": scripted_dribbler,
    "marker": scripted_marker,
}


# --- team runtime ----------------------------------------------------------

@dataclass
class RobotBundle:
    """Everything one controlled robot needs: four policies and its selector state."""

    robot_id: int
    policies: dict  # PolicyName -> MlpPolicy
    selector: SelectorConfig = SelectorConfig()
    state: SelectorState = field(default_factory=SelectorState)
    memory: dict = field(default_factory=dict)  # PolicyName -> ActionMemory
    last: PolicyName | None = None


class DimensionMismatch(ValueError):
    pass


def make_bundle(robot_id: int, policies: dict, selector: SelectorConfig = SelectorConfig()) -> RobotBundle:
    """Check every enabled policy against its observation/action layout up front."""
    checked = {}
    for name in PolicyName:
        if not selector.enabled(name):
            continue
        if name not in policies:
            raise FileNotFoundError(f"no weights for {name.value}")
        pol = policies[name]
        spec = SPECS[name]
        if pol.obs_dim != spec.obs_dim or pol.act_dim != spec.act_dim:
            raise DimensionMismatch(
                f"{name.value}: weights are {pol.obs_dim}->{pol.act_dim}, layout needs {spec.obs_dim}->{spec.act_dim}"
            )
        checked[name] = pol
    return RobotBundle(robot_id, checked, selector)


def run_team_tick(world: WorldState, roster: list[RobotBundle], config: SimConfig, obs_rngs=None,
                  strategy_fn=None) -> tuple[dict, list[SelectorDecision]]:
    """Select, observe, act (policy mean) and decode for each controlled upright robot.

    Returns ({robot_id: SkillCommand}, decisions). ``obs_rngs`` maps robot id to
    its observation-noise generator; ``strategy_fn(world, robot_id)`` supplies
    POSITIONING targets.
    """
    from .rewards import strategy_position

    geo = config.geometry
    strategy_fn = strategy_fn or (lambda w, i: strategy_position(w, i, geo))
    commands = {}
    log = []
    for bundle in roster:
        rid = bundle.robot_id
        if not world.upright[rid]:
            continue
        rng = None if obs_rngs is None else obs_rngs[rid]
        estimate = None
        noise = config.fidelity.obs_ball_noise_std
        if noise > 0 and rng is not None:
            ex, ey = rng.normal(0.0, noise, 2)
            estimate = (float(world.ball_pos[0]) + ex, float(world.ball_pos[1]) + ey)
        decision = select(world, rid, bundle.selector, geo, bundle.state, estimate)
        log.append(decision)
        name = decision.chosen
        spec = SPECS[name]
        if name is not bundle.last:
            # a fresh kick-angle memory whenever MID_FIELD is (re)entered
            bundle.memory[name] = ActionMemory()
            bundle.last = name
        sp = strategy_fn(world, rid) if name is PolicyName.POSITIONING else None
        obs = build_observation(spec, world, rid, config, rng, sp)
        action = bundle.policies[name].act_mean(obs)
        commands[rid] = decode_action(spec, action, world.pose[rid], config, bundle.memory.setdefault(name, ActionMemory()))
    return commands, log
