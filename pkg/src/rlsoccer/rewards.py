"""Per-policy rewards, termination rules and training scenario spawns."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BallState, FieldGeometry, Pose2D, RobotState, Team, WorldState, goal_center
from .policy_io import PolicyName
from .simulator import ConfigError, EventKind, Fidelity, SimConfig


class UnknownPolicy(KeyError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    w_to_ball: float = 0.5
    w_ball_to_goal: float = 1.0
    r_goal: float = 10.0
    r_oob: float = -5.0
    w_to_strategy: float = 1.0
    r_ball_in_view_per_step: float = 0.01
    w_opponent_proximity: float = -0.05
    r_ball_far_from_goal: float = -5.0
    w_near_goal_to_ball: float = 0.5  # 0 gives the bare NEAR_GOAL formula
    far_from_goal_radius: float = 2.5
    episode_timeout: float = 60.0
    ball_view_half_angle: float = 1.0
    opponent_proximity_radius: float = 0.5

    def validate(self, prefix: str = "reward") -> None:
        for key, value in self.__dict__.items():
            if not math.isfinite(value):
                raise ConfigError(f"{prefix}.{key}", "must be finite")
        if not self.r_goal > 0:
            raise ConfigError(f"{prefix}.r_goal", "must be > 0")
        for key in ("r_oob", "w_opponent_proximity", "r_ball_far_from_goal"):
            if getattr(self, key) > 0:
                raise ConfigError(f"{prefix}.{key}", "penalties must be <= 0")
        for key in ("far_from_goal_radius", "episode_timeout", "ball_view_half_angle", "opponent_proximity_radius"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{prefix}.{key}", "must be > 0")


class Terminal(str, enum.Enum):
    RUNNING = "RUNNING"
    GOAL = "GOAL"
    OUT_OF_BOUNDS = "OUT_OF_BOUNDS"
    TIMEOUT = "TIMEOUT"


def _dist(ax, ay, bx, by) -> float:
    dx = ax - bx
    dy = ay - by
    return math.sqrt(dx * dx + dy * dy)


def _scored(events, team: Team) -> tuple[bool, bool]:
    """(we scored, ball left the field some other way) from this tick's events."""
    ours = EventKind.GOAL_HOME if team is Team.HOME else EventKind.GOAL_AWAY
    theirs = EventKind.GOAL_AWAY if team is Team.HOME else EventKind.GOAL_HOME
    goal = out = False
    for e in events:
        if e.kind is ours:
            goal = True
        elif e.kind is theirs or e.kind is EventKind.OUT_OF_BOUNDS:
            out = True
    return goal, out


def reward(policy_name, prev_world: WorldState, world: WorldState, events, config: RewardConfig,
           geometry: FieldGeometry | None = None, robot_id: int = 0, strategy=None) -> float:
    """Reward of robot ``robot_id`` for the transition ``prev_world -> world``.

    Distance shaping uses decreases (previous minus current distance), so
    summed over an episode it telescopes to initial minus final distance.
    ``strategy`` is the (previous, current) strategy position pair used by
    POSITIONING.
    """
    try:
        name = PolicyName(policy_name)
    except ValueError:
        raise UnknownPolicy(policy_name) from None
    geo = geometry or FieldGeometry()
    team = Team(int(world.team[robot_id]))
    gx, gy = goal_center(geo, team)
    pbx, pby = float(prev_world.ball_pos[0]), float(prev_world.ball_pos[1])
    bx, by = float(world.ball_pos[0]), float(world.ball_pos[1])
    prx, pry = float(prev_world.pose[robot_id, 0]), float(prev_world.pose[robot_id, 1])
    rx, ry = float(world.pose[robot_id, 0]), float(world.pose[robot_id, 1])
    goal, out = _scored(events, team)
    ball_goal_gain = _dist(pbx, pby, gx, gy) - _dist(bx, by, gx, gy)

    if name is PolicyName.BALL_DUEL:
        to_ball = _dist(prx, pry, pbx, pby) - _dist(rx, ry, bx, by)
        return config.w_to_ball * to_ball + config.w_ball_to_goal * ball_goal_gain + config.r_goal * goal
    if name is PolicyName.MID_FIELD:
        return config.w_ball_to_goal * ball_goal_gain + config.r_goal * goal + config.r_oob * out
    if name is PolicyName.NEAR_GOAL:
        # charged once, on the tick the ball is moved out past the radius
        far = _dist(bx, by, gx, gy) > config.far_from_goal_radius
        was_far = _dist(pbx, pby, gx, gy) > config.far_from_goal_radius
        to_ball = _dist(prx, pry, pbx, pby) - _dist(rx, ry, bx, by)
        return (config.r_goal * goal + config.r_ball_far_from_goal * (far and not was_far)
                + config.w_ball_to_goal * ball_goal_gain + config.w_near_goal_to_ball * to_ball)
    # POSITIONING
    if strategy is None:
        raise ValueError("POSITIONING reward needs the (previous, current) strategy positions")
    (psx, psy), (sx, sy) = strategy
    to_strategy = _dist(prx, pry, psx, psy) - _dist(rx, ry, sx, sy)
    th = float(world.pose[robot_id, 2])
    c = math.cos(th)
    s = math.sin(th)
    lx = c * (bx - rx) + s * (by - ry)
    ly = c * (by - ry) - s * (bx - rx)
    in_view = abs(math.atan2(ly, lx)) <= config.ball_view_half_angle
    crowded = any(
        world.team[j] != int(team) and _dist(rx, ry, world.pose[j, 0], world.pose[j, 1]) <= config.opponent_proximity_radius
        for j in range(world.n_robots)
    )
    return (config.w_to_strategy * to_strategy + config.r_ball_in_view_per_step * in_view
            + config.w_opponent_proximity * crowded)


def reward_bound(config: RewardConfig, sim: SimConfig) -> float:
    """Upper bound on |reward| for any single tick."""
    geo = sim.geometry
    push = 2.0 * (geo.robot_radius + geo.ball_radius)
    kick = sim.kick_speed * (1.0 + 6.0 * sim.fidelity.kick_speed_noise_frac)
    ball_step = kick * sim.dt + push
    robot_step = sim.max_linear_speed * sim.dt + 2.0 * geo.robot_radius + geo.ball_radius
    shaping = ((abs(config.w_to_ball) + abs(config.w_near_goal_to_ball)) * (ball_step + robot_step) + abs(config.w_ball_to_goal) * ball_step
               + abs(config.w_to_strategy) * (robot_step + ball_step))
    return shaping + config.r_goal + abs(config.r_oob) + abs(config.r_ball_far_from_goal) + abs(
        config.r_ball_in_view_per_step) + abs(config.w_opponent_proximity)


def is_terminal(world: WorldState, events, elapsed: float, config: RewardConfig, team: Team = Team.HOME) -> Terminal:
    """GOAL has priority over OUT_OF_BOUNDS; an own goal counts as out of bounds."""
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    goal, out = _scored(events, Team(team))
    if goal:
        return Terminal.GOAL
    if out:
        return Terminal.OUT_OF_BOUNDS
    if elapsed >= config.episode_timeout - 1e-9:
        return Terminal.TIMEOUT
    return Terminal.RUNNING


# --- scenarios -------------------------------------------------------------

class ScenarioName(str, enum.Enum):
    BALL_DUEL_2V0 = "BALL_DUEL_2V0"
    MIDFIELD_1V0 = "MIDFIELD_1V0"
    NEARGOAL_1V0 = "NEARGOAL_1V0"
    POSITIONING = "POSITIONING"
    REACH_BALL_TOY = "REACH_BALL_TOY"


@dataclass(frozen=True)
class Region:
    """Spawn region: a rectangle, or an annulus around the ball when ``near_ball`` is set.

    Rectangles are in the team frame of the robot being placed (ball regions
    use the HOME frame). ``heading`` is "random", "to_ball" or "to_goal".
    ``field_side`` keeps an annulus to the half facing away from the opponent goal.
    """

    x: tuple[float, float] = (0.0, 0.0)
    y: tuple[float, float] = (0.0, 0.0)
    near_ball: tuple[float, float] | None = None
    heading: str = "random"
    field_side: bool = False


@dataclass(frozen=True)
class OpponentBinding:
    region: Region
    script: str  # "defender", "goalie" or "marker"
    weakened: bool = True


@dataclass(frozen=True)
class ScenarioSpec:
    name: ScenarioName
    policy: PolicyName
    fidelity: Fidelity
    ball: Region
    home: tuple[Region, ...]
    opponents: tuple[OpponentBinding, ...] = ()
    policy_robots: int = 1  # leading HOME robots driven by the trained policy
    teammate_script: str | None = None  # script for the remaining HOME robots
    geometry: FieldGeometry | None = None
    timeout: float | None = None

    def n_robots(self) -> int:
        return len(self.home) + len(self.opponents)


TOY_GEOMETRY = FieldGeometry(length=4.0, width=3.0, goal_width=1.0, goal_box_depth=0.8, goal_box_width=2.0)


def scenario(name, geometry: FieldGeometry | None = None) -> ScenarioSpec:
    """Built-in training scenario."""
    name = ScenarioName(name)
    geo = geometry or FieldGeometry()
    hl, hw = geo.half_length, geo.half_width
    if name is ScenarioName.BALL_DUEL_2V0:
        return ScenarioSpec(
            name, PolicyName.BALL_DUEL, Fidelity.LOW,
            ball=Region((-hl + 1.0, hl - 1.0), (-hw + 0.5, hw - 0.5)),
            home=(Region(near_ball=(0.3, 3.0)), Region((-hl + 0.5, hl - 0.5), (-hw + 0.3, hw - 0.3))),
            policy_robots=2,
        )
    if name is ScenarioName.MIDFIELD_1V0:
        return ScenarioSpec(
            name, PolicyName.MID_FIELD, Fidelity.LOW,
            ball=Region((-hl + 1.5, hl - 2.5), (-hw + 0.5, hw - 0.5)),
            home=(Region(near_ball=(0.4, 2.5)),),
        )
    if name is ScenarioName.NEARGOAL_1V0:
        return ScenarioSpec(
            name, PolicyName.NEAR_GOAL, Fidelity.HIGH,
            ball=Region((hl - geo.goal_box_depth, hl - 0.2), (-0.5 * geo.goal_box_width + 0.2, 0.5 * geo.goal_box_width - 0.2)),
            # the selector hands over NEAR_GOAL to a robot arriving from the field side
            home=(Region(near_ball=(0.3, 1.0), heading="to_ball", field_side=True),),
        )
    if name is ScenarioName.POSITIONING:
        return ScenarioSpec(
            name, PolicyName.POSITIONING, Fidelity.LOW,
            ball=Region((-hl + 1.5, hl - 1.5), (-hw + 1.0, hw - 1.0)),
            home=(Region((-hl + 0.5, hl - 0.5), (-hw + 0.3, hw - 0.3)), Region(near_ball=(0.35, 0.6), heading="to_goal")),
            opponents=(
                OpponentBinding(Region((0.0, hl - 1.0), (-hw + 0.5, hw - 0.5)), "defender"),
                OpponentBinding(Region((-hl + 0.5, hl - 0.5), (-hw + 0.5, hw - 0.5)), "marker"),
            ),
            teammate_script="dribbler",
        )
    toy = geometry or TOY_GEOMETRY
    return ScenarioSpec(
        name, PolicyName.BALL_DUEL, Fidelity.LOW,
        ball=Region((-toy.half_length + 0.5, toy.half_length - 0.5), (-toy.half_width + 0.5, toy.half_width - 0.5)),
        home=(Region(near_ball=(1.0, 2.5)),),
        geometry=toy,
        timeout=20.0,
    )


def _heading(region: Region, x, y, team: Team, ball, geo: FieldGeometry, rng) -> float:
    if region.heading == "to_ball":
        return math.atan2(ball[1] - y, ball[0] - x)
    if region.heading == "to_goal":
        gx, gy = goal_center(geo, team)
        return math.atan2(gy - y, gx - x)
    return rng.uniform(-math.pi, math.pi)


def _sample(region: Region, team: Team, ball, geo: FieldGeometry, rng) -> tuple[float, float]:
    if region.near_ball is not None:
        r = rng.uniform(*region.near_ball)
        a = rng.uniform(-math.pi, math.pi)
        if region.field_side:
            gx, gy = goal_center(geo, team)
            a = math.atan2(ball[1] - gy, ball[0] - gx) + 0.5 * a
        return (ball[0] + r * math.cos(a), ball[1] + r * math.sin(a))
    sign = Team(team).attack_sign
    return (sign * rng.uniform(*region.x), sign * rng.uniform(*region.y))


def spawn(spec: ScenarioSpec, rng: np.random.Generator, geometry: FieldGeometry | None = None,
          dt: float = 0.05, max_tries: int = 200) -> WorldState:
    """Sample a world: HOME robots first (policy robots leading), then opponents."""
    geo = spec.geometry or geometry or FieldGeometry()
    hl, hw = geo.half_length, geo.half_width
    sep_rr = 2.0 * geo.robot_radius + 0.05
    sep_rb = geo.robot_radius + geo.ball_radius + 0.05
    bx, by = _sample(spec.ball, Team.HOME, None, geo, rng)
    ball = (bx, by)
    placements = [(r, Team.HOME) for r in spec.home] + [(o.region, Team.AWAY) for o in spec.opponents]
    robots = []
    for idx, (region, team) in enumerate(placements):
        for _ in range(max_tries):
            x, y = _sample(region, team, ball, geo, rng)
            if abs(x) > hl - 0.2 or abs(y) > hw - 0.2:
                continue
            if _dist(x, y, bx, by) < sep_rb:
                continue
            if any(_dist(x, y, r.pose.x, r.pose.y) < sep_rr for r in robots):
                continue
            break
        else:
            raise RuntimeError(f"could not place robot {idx} for {spec.name.value}")
        th = _heading(region, x, y, team, ball, geo, rng)
        robots.append(RobotState(pose=Pose2D(x, y, th), team=team, id=idx))
    world = WorldState.from_parts(robots, BallState(position=ball), dt=dt)
    world.meta["half_length"] = hl
    return world


def strategy_position(world: WorldState, robot_id: int, geometry: FieldGeometry | None = None) -> tuple[float, float]:
    """Supporting spot for a robot whose teammate plays the ball.

    Trails the ball by 1.5 m toward the own goal on the opposite lateral
    side, kept 0.5 m inside the field.
    """
    geo = geometry or FieldGeometry()
    sign = Team(int(world.team[robot_id])).attack_sign
    bx, by = float(world.ball_pos[0]), float(world.ball_pos[1])
    side = -1.0 if by >= 0 else 1.0
    x = bx - sign * 1.5
    y = by + side * 1.5
    xl = geo.half_length - 0.5
    yl = geo.half_width - 0.5
    return (min(max(x, -xl), xl), min(max(y, -yl), yl))
