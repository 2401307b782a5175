"""Low-level skills that the learned policies parameterize.

Every skill resolves to an egocentric velocity command, optionally paired
with a kick request that the simulator turns into a ball launch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .geometry import WorldState, normalize_angle


class SkillKind(str, enum.Enum):
    WALK_AT_VELOCITY = "WALK_AT_VELOCITY"
    WALK_TO_POINT = "WALK_TO_POINT"
    WALK_AND_KICK = "WALK_AND_KICK"
    STAND = "STAND"


@dataclass(frozen=True)
class SkillCommand:
    kind: SkillKind
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    target: tuple[float, float] | None = None
    face: float = 0.0
    kick_angle: float = 0.0

    @classmethod
    def velocity(cls, vx: float, vy: float, omega: float, max_linear: float, max_angular: float) -> "SkillCommand":
        """Velocity command clamped to the speed limits (linear speed by norm)."""
        speed = math.sqrt(vx * vx + vy * vy)
        if speed > max_linear:
            k = max_linear / speed
            vx *= k
            vy *= k
        omega = min(max(omega, -max_angular), max_angular)
        return cls(SkillKind.WALK_AT_VELOCITY, vx=vx, vy=vy, omega=omega)

    @classmethod
    def to_point(cls, target, face: float) -> "SkillCommand":
        return cls(SkillKind.WALK_TO_POINT, target=(float(target[0]), float(target[1])), face=normalize_angle(face))

    @classmethod
    def walk_and_kick(cls, kick_angle: float) -> "SkillCommand":
        return cls(SkillKind.WALK_AND_KICK, kick_angle=normalize_angle(kick_angle))

    @classmethod
    def stand(cls) -> "SkillCommand":
        return cls(SkillKind.STAND)

    def to_dict(self) -> dict:
        k = self.kind
        if k is SkillKind.WALK_AT_VELOCITY:
            return {"kind": k.value, "vx": self.vx, "vy": self.vy, "omega": self.omega}
        if k is SkillKind.WALK_TO_POINT:
            return {"kind": k.value, "target": list(self.target), "face": self.face}
        if k is SkillKind.WALK_AND_KICK:
            return {"kind": k.value, "kick_angle": self.kick_angle}
        return {"kind": k.value}

    @classmethod
    def from_dict(cls, d: dict) -> "SkillCommand":
        k = SkillKind(d["kind"])
        if k is SkillKind.WALK_AT_VELOCITY:
            return cls(k, vx=d["vx"], vy=d["vy"], omega=d["omega"])
        if k is SkillKind.WALK_TO_POINT:
            return cls(k, target=tuple(d["target"]), face=d["face"])
        if k is SkillKind.WALK_AND_KICK:
            return cls(k, kick_angle=d["kick_angle"])
        return cls(k)


def _ball_local(world: WorldState, robot_id: int) -> tuple[float, float]:
    x, y, th = world.pose[robot_id]
    dx = world.ball_pos[0] - x
    dy = world.ball_pos[1] - y
    c = math.cos(th)
    s = math.sin(th)
    return (c * dx + s * dy, -s * dx + c * dy)


def can_kick(world: WorldState, robot_id: int, config) -> bool:
    """Ball within kick range of the front face and inside the kick cone."""
    if not world.upright[robot_id]:
        return False
    lx, ly = _ball_local(world, robot_id)
    fx = lx - config.geometry.robot_half_length
    if fx * fx + ly * ly > config.kick_range * config.kick_range:
        return False
    return abs(math.atan2(ly, lx)) <= config.kick_half_angle


def can_kick_one_hot(world: WorldState, robot_id: int, config) -> tuple[float, float]:
    """(no, yes) encoding."""
    return (0.0, 1.0) if can_kick(world, robot_id, config) else (1.0, 0.0)


def _steer_around(px, py, tx, ty, dist, obstacles):
    """Direction of travel from P toward T detouring the nearest blocking disk.

    ``obstacles`` is a list of (cx, cy, radius). Returns a unit vector.
    """
    ux = (tx - px) / dist
    uy = (ty - py) / dist
    nearest = None
    for cx, cy, rad in obstacles:
        # a target inside the disk cannot be detoured to
        if (tx - cx) ** 2 + (ty - cy) ** 2 <= rad * rad:
            continue
        t = (cx - px) * ux + (cy - py) * uy
        if t < 0.0:
            # behind us; only matters if we are already inside it
            if (px - cx) ** 2 + (py - cy) ** 2 >= rad * rad:
                continue
        t = min(max(t, 0.0), dist)
        qx = px + ux * t - cx
        qy = py + uy * t - cy
        if qx * qx + qy * qy < rad * rad and (nearest is None or t < nearest[0]):
            nearest = (t, cx, cy, rad)
    if nearest is None:
        return ux, uy
    _, cx, cy, rad = nearest
    ox = px - cx
    oy = py - cy
    d = math.sqrt(ox * ox + oy * oy)
    if d <= rad:
        # inside the inflated footprint: back out while still heading on
        if d < 1e-9:
            return -uy, ux
        ex = ox / d + ux
        ey = oy / d + uy
        n = math.sqrt(ex * ex + ey * ey)
        if n < 1e-9:
            return -oy / d, ox / d
        return ex / n, ey / n
    base = math.atan2(-oy, -ox)
    half = math.asin(rad / d)
    goal = math.atan2(uy, ux)
    a1 = base + half
    a2 = base - half
    a = a1 if abs(normalize_angle(a1 - goal)) <= abs(normalize_angle(a2 - goal)) else a2
    return math.cos(a), math.sin(a)


def walk_to_point(world: WorldState, robot_id: int, target, face: float, config,
                  avoid_ball: bool = False) -> tuple[float, float, float]:
    """Egocentric velocity driving toward ``target`` while turning to ``face``.

    Full speed outside ``config.arrival_radius``, proportional inside it.
    Other robots (footprint inflated by ``config.obstacle_inflation``) are
    detoured via the tangent of the nearest blocking one.
    """
    x, y, th = (float(v) for v in world.pose[robot_id])
    err = normalize_angle(face - th)
    omega = min(max(config.turn_gain * err, -config.max_angular_speed), config.max_angular_speed)
    tx, ty = float(target[0]), float(target[1])
    dx = tx - x
    dy = ty - y
    dist = math.sqrt(dx * dx + dy * dy)
    if dist <= 1e-9:
        return (0.0, 0.0, omega)
    vmax = config.max_linear_speed
    speed = vmax if dist > config.arrival_radius else vmax * dist / config.arrival_radius
    geo = config.geometry
    obstacles = []
    rad = geo.robot_radius + config.obstacle_inflation
    for j in range(world.n_robots):
        if j != robot_id:
            obstacles.append((float(world.pose[j, 0]), float(world.pose[j, 1]), rad))
    if avoid_ball:
        obstacles.append((float(world.ball_pos[0]), float(world.ball_pos[1]),
                          geo.ball_radius + geo.robot_radius + config.ball_clearance))
    gx, gy = _steer_around(x, y, tx, ty, dist, obstacles)
    gx *= speed
    gy *= speed
    c = math.cos(th)
    s = math.sin(th)
    return (c * gx + s * gy, -s * gx + c * gy, omega)


def kick_approach_point(world: WorldState, kick_angle: float, config) -> tuple[float, float]:
    """Robot-center position whose front face sits approach_fraction*kick_range behind the ball."""
    back = config.geometry.robot_half_length + config.approach_fraction * config.kick_range
    return (
        float(world.ball_pos[0]) - back * math.cos(kick_angle),
        float(world.ball_pos[1]) - back * math.sin(kick_angle),
    )


def walk_and_kick(world: WorldState, robot_id: int, kick_angle: float, config):
    """Returns ``(vx, vy, omega, kick)``; ``kick`` is True when the kick fires this tick."""
    th = float(world.pose[robot_id, 2])
    if can_kick(world, robot_id, config) and abs(normalize_angle(th - kick_angle)) <= config.kick_align_tolerance:
        return (0.0, 0.0, 0.0, True)
    target = kick_approach_point(world, kick_angle, config)
    vx, vy, om = walk_to_point(world, robot_id, target, kick_angle, config, avoid_ball=True)
    return (vx, vy, om, False)


def resolve_command(world: WorldState, robot_id: int, command: SkillCommand, config):
    """Skill command to ``(vx, vy, omega, kick_angle_or_None)``."""
    kind = command.kind
    if kind is SkillKind.WALK_AT_VELOCITY:
        return (command.vx, command.vy, command.omega, None)
    if kind is SkillKind.STAND:
        return (0.0, 0.0, 0.0, None)
    if kind is SkillKind.WALK_TO_POINT:
        vx, vy, om = walk_to_point(world, robot_id, command.target, command.face, config)
        return (vx, vy, om, None)
    vx, vy, om, kick = walk_and_kick(world, robot_id, command.kick_angle, config)
    return (vx, vy, om, command.kick_angle if kick else None)
