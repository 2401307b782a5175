"""Observation vectors and action decoding for the four sub-policies.

All positional entries are egocentric and divided by the field half-length.
Observation layouts (entry name, width), in order:

  MID_FIELD    ball 2 | can_kick 2 | goal_center 2 | goalposts 8 | field_sides 4 | ball_history 6   = 24
  BALL_DUEL    ball 2 | can_kick 2 | closest_teammate_to_goal 2 | goalposts 8 | field_sides 4 | ball_history 6 = 24
  NEAR_GOAL    ball 2 | opponent_goalposts 4 | ball_history 6                                       = 12
  POSITIONING  ball 2 | strategy_position 2 | defenders 4 | goalposts 8 | field_sides 4 | ball_history 6 = 26

Goalposts are ordered opponent-left, opponent-right, own-left, own-right in
the team frame (left is +y for a robot facing the opponent goal). Field
sides are the distances to the opponent goal line, own goal line, left and
right side lines. can_kick is a (no, yes) one-hot. Ball history is oldest
first. Missing defenders are padded with (-2, -2).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import FieldGeometry, Team, WorldState, normalize_angle
from .simulator import SimConfig
from .skills import SkillCommand, can_kick


class PolicyName(str, enum.Enum):
    MID_FIELD = "MID_FIELD"
    BALL_DUEL = "BALL_DUEL"
    NEAR_GOAL = "NEAR_GOAL"
    POSITIONING = "POSITIONING"


class SkillBinding(str, enum.Enum):
    KICK_ANGLE = "KICK_ANGLE"
    VELOCITY = "VELOCITY"
    VELOCITY_WITH_STAND = "VELOCITY_WITH_STAND"


class MissingStrategyPosition(ValueError):
    pass


DEFENDER_SENTINEL = (-2.0, -2.0)
MAX_DEFENDERS = 2

LAYOUTS = {
    PolicyName.MID_FIELD: (
        ("ball", 2), ("can_kick", 2), ("goal_center", 2), ("goalposts", 8), ("field_sides", 4), ("ball_history", 6),
    ),
    PolicyName.BALL_DUEL: (
        ("ball", 2), ("can_kick", 2), ("closest_teammate_to_goal", 2), ("goalposts", 8), ("field_sides", 4),
        ("ball_history", 6),
    ),
    PolicyName.NEAR_GOAL: (("ball", 2), ("opponent_goalposts", 4), ("ball_history", 6)),
    PolicyName.POSITIONING: (
        ("ball", 2), ("strategy_position", 2), ("defenders", 4), ("goalposts", 8), ("field_sides", 4),
        ("ball_history", 6),
    ),
}


@dataclass(frozen=True)
class PolicySpec:
    name: PolicyName
    obs_dim: int
    act_dim: int
    skill_binding: SkillBinding
    delta_theta_clip: float = 0.2
    layout: tuple = field(default=(), compare=False)

    @classmethod
    def for_policy(cls, name, delta_theta_clip: float = 0.2) -> "PolicySpec":
        name = PolicyName(name)
        layout = LAYOUTS[name]
        act_dim, binding = {
            PolicyName.MID_FIELD: (1, SkillBinding.KICK_ANGLE),
            PolicyName.BALL_DUEL: (3, SkillBinding.VELOCITY),
            PolicyName.NEAR_GOAL: (3, SkillBinding.VELOCITY),
            PolicyName.POSITIONING: (4, SkillBinding.VELOCITY_WITH_STAND),
        }[name]
        return cls(name, sum(w for _, w in layout), act_dim, binding, delta_theta_clip, layout)

    def slices(self) -> dict[str, slice]:
        out, i = {}, 0
        for entry, width in self.layout:
            out[entry] = slice(i, i + width)
            i += width
        return out


SPECS = {name: PolicySpec.for_policy(name) for name in PolicyName}


def layout_table() -> str:
    lines = []
    for name in PolicyName:
        spec = SPECS[name]
        lines.append(f"{name.value}  obs_dim={spec.obs_dim} act_dim={spec.act_dim} binding={spec.skill_binding.value}")
        for entry, sl in spec.slices().items():
            lines.append(f"  [{sl.start:2d}:{sl.stop:2d}] {entry}")
    return "\n".join(lines)


def closest_teammate_to_goal(world: WorldState, observer_id: int, geometry: FieldGeometry | None = None):
    """Egocentric position (meters) of the observer's teammate nearest the opponent goal.

    Ties go to the lowest id; with no teammate the observer itself is used.
    """
    hl = (geometry or FieldGeometry()).half_length
    return _closest_teammate(world, observer_id, hl)


def _closest_teammate(world: WorldState, observer_id: int, half_length: float):
    team = int(world.team[observer_id])
    gx = (1.0 if team == Team.HOME else -1.0) * half_length
    best = None
    for j in range(world.n_robots):
        if j == observer_id or world.team[j] != team:
            continue
        dx = world.pose[j, 0] - gx
        dy = world.pose[j, 1]
        d = dx * dx + dy * dy
        if best is None or d < best[0]:
            best = (d, j)
    src = observer_id if best is None else best[1]
    x, y, th = world.pose[observer_id]
    px, py = world.pose[src, 0], world.pose[src, 1]
    c = math.cos(th)
    s = math.sin(th)
    return (float(c * (px - x) + s * (py - y)), float(-s * (px - x) + c * (py - y)))


def build_observation(spec: PolicySpec, world: WorldState, robot_id: int, config: SimConfig,
                      rng: np.random.Generator | None = None, strategy_position=None) -> np.ndarray:
    """Observation vector for ``spec`` from robot ``robot_id``'s point of view.

    Ball entries get observation noise from ``rng`` when the fidelity
    profile has any (one draw of 8 normals per call).
    """
    name = spec.name
    if name is PolicyName.POSITIONING and strategy_position is None:
        raise MissingStrategyPosition("POSITIONING needs a strategy position")
    geo = config.geometry
    hl = geo.half_length
    inv = 1.0 / hl
    x, y, th = (float(v) for v in world.pose[robot_id])
    c = math.cos(th)
    s = math.sin(th)
    team = int(world.team[robot_id])
    sign = 1.0 if team == Team.HOME else -1.0

    def ego(px, py):
        dx = px - x
        dy = py - y
        return ((c * dx + s * dy) * inv, (c * dy - s * dx) * inv)

    # ball and its history, noisy under HIGH
    pts = [(float(world.ball_pos[0]), float(world.ball_pos[1]))]
    pts += [(float(h[0]), float(h[1])) for h in world.ball_hist]
    balls = [ego(px, py) for px, py in pts]
    sigma = config.fidelity.obs_ball_noise_std
    if sigma > 0:
        z = rng.standard_normal(8) * (sigma * inv)
        balls = [(bx + z[2 * k], by + z[2 * k + 1]) for k, (bx, by) in enumerate(balls)]
    hist = [v for p in balls[1:] for v in p]

    hg = 0.5 * geo.goal_width
    # team-frame posts: opponent-left, opponent-right, own-left, own-right
    opp_posts = [ego(sign * hl, sign * hg), ego(sign * hl, -sign * hg)]
    own_posts = [ego(-sign * hl, sign * hg), ego(-sign * hl, -sign * hg)]

    out: list[float] = list(balls[0])
    if name is PolicyName.NEAR_GOAL:
        out += [v for p in opp_posts for v in p]
        out += hist
        return np.array(out, dtype=np.float64)

    if name is PolicyName.POSITIONING:
        out += ego(float(strategy_position[0]), float(strategy_position[1]))
        opps = [j for j in range(world.n_robots) if world.team[j] != team][:MAX_DEFENDERS]
        for j in opps:
            out += ego(float(world.pose[j, 0]), float(world.pose[j, 1]))
        for _ in range(MAX_DEFENDERS - len(opps)):
            out += DEFENDER_SENTINEL
    else:
        out += (0.0, 1.0) if can_kick(world, robot_id, config) else (1.0, 0.0)
        if name is PolicyName.MID_FIELD:
            out += ego(sign * hl, 0.0)
        else:
            tx, ty = _closest_teammate(world, robot_id, hl)
            out += (tx * inv, ty * inv)
    out += [v for p in opp_posts + own_posts for v in p]
    xt = sign * x
    yt = sign * y
    hw = geo.half_width
    out += ((hl - xt) * inv, (xt + hl) * inv, (hw - yt) * inv, (yt + hw) * inv)
    out += hist
    return np.array(out, dtype=np.float64)


@dataclass
class ActionMemory:
    """Per-robot decoder state: MID_FIELD's persistent desired kick angle."""

    kick_angle: float | None = None


def decode_action(spec: PolicySpec, raw, robot_pose, config: SimConfig,
                  memory: ActionMemory | None = None) -> SkillCommand:
    """Map a raw action in [-1, 1]^act_dim to a skill command.

    ``robot_pose`` is a Pose2D or an (x, y, theta) triple.
    """
    a = np.asarray(raw, dtype=np.float64).reshape(-1)
    if a.shape[0] != spec.act_dim:
        raise ValueError(f"{spec.name.value} expects {spec.act_dim} action dims, got {a.shape[0]}")
    a = np.clip(np.nan_to_num(a, nan=0.0, posinf=1.0, neginf=-1.0), -1.0, 1.0)
    if spec.skill_binding is SkillBinding.KICK_ANGLE:
        if memory is None:
            memory = ActionMemory()
        if memory.kick_angle is None:
            theta = robot_pose.theta if hasattr(robot_pose, "theta") else robot_pose[2]
            memory.kick_angle = normalize_angle(float(theta))
        memory.kick_angle = normalize_angle(memory.kick_angle + float(a[0]) * spec.delta_theta_clip)
        return SkillCommand.walk_and_kick(memory.kick_angle)
    if spec.skill_binding is SkillBinding.VELOCITY_WITH_STAND and a[3] > 0.0:
        return SkillCommand.stand()
    vmax = config.max_linear_speed
    wmax = config.max_angular_speed
    return SkillCommand.velocity(float(a[0]) * vmax, float(a[1]) * vmax, float(a[2]) * wmax, vmax, wmax)
