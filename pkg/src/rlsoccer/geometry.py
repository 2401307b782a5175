"""Field geometry, coordinate frames and the ground-truth world model.

Conventions: the HOME team attacks +x, the AWAY team attacks -x. Egocentric
frames put +x along the robot's facing direction and +y to its left.
Robot ids equal their index in the world arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(a, TWO_PI)
    if a == -math.pi:
        return math.pi
    return a


class Team(enum.IntEnum):
    HOME = 0
    AWAY = 1

    @property
    def attack_sign(self) -> float:
        return 1.0 if self is Team.HOME else -1.0

    @property
    def opponent(self) -> "Team":
        return Team.AWAY if self is Team.HOME else Team.HOME


@dataclass(frozen=True, slots=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def compose(self, other: "Pose2D") -> "Pose2D":
        """Apply ``other`` (expressed in this pose's frame) on top of this pose."""
        gx, gy = from_egocentric(self, (other.x, other.y))
        return Pose2D(gx, gy, self.theta + other.theta)


@dataclass(frozen=True)
class FieldGeometry:
    length: float = 9.0
    width: float = 6.0
    goal_width: float = 1.5
    goal_box_depth: float = 1.65
    goal_box_width: float = 4.0
    robot_half_length: float = 0.15
    robot_half_width: float = 0.15
    ball_radius: float = 0.05

    def __post_init__(self):
        for name in (
            "length", "width", "goal_width", "goal_box_depth", "goal_box_width",
            "robot_half_length", "robot_half_width", "ball_radius",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.goal_width >= self.width:
            raise ValueError("goal_width must be smaller than width")
        if self.goal_box_width >= self.width:
            raise ValueError("goal_box_width must be smaller than width")

    @property
    def half_length(self) -> float:
        return 0.5 * self.length

    @property
    def half_width(self) -> float:
        return 0.5 * self.width

    @property
    def robot_radius(self) -> float:
        """Circumradius of the rectangular robot footprint."""
        return math.hypot(self.robot_half_length, self.robot_half_width)


def to_egocentric(observer: Pose2D, point) -> tuple[float, float]:
    """Express a global point in the observer frame."""
    dx = point[0] - observer.x
    dy = point[1] - observer.y
    c = math.cos(observer.theta)
    s = math.sin(observer.theta)
    return (c * dx + s * dy, -s * dx + c * dy)


def from_egocentric(observer: Pose2D, point) -> tuple[float, float]:
    """Inverse of :func:`to_egocentric`."""
    c = math.cos(observer.theta)
    s = math.sin(observer.theta)
    return (observer.x + c * point[0] - s * point[1], observer.y + s * point[0] + c * point[1])


def goal_center(geometry: FieldGeometry, attacker_team: Team) -> tuple[float, float]:
    """Center of the goal that ``attacker_team`` shoots at."""
    return (Team(attacker_team).attack_sign * geometry.half_length, 0.0)


def own_goal_center(geometry: FieldGeometry, team: Team) -> tuple[float, float]:
    return (-Team(team).attack_sign * geometry.half_length, 0.0)


def goalposts(geometry: FieldGeometry) -> list[tuple[float, float]]:
    """All four posts: +x goal (left, right), then -x goal (left, right)."""
    hl = geometry.half_length
    hg = 0.5 * geometry.goal_width
    return [(hl, hg), (hl, -hg), (-hl, hg), (-hl, -hg)]


def in_opposing_goal_box(geometry: FieldGeometry, attacker_team: Team, point, margin: float = 0.0) -> bool:
    """Whether ``point`` is inside the goal box ``attacker_team`` attacks.

    The box is boundary inclusive; ``margin`` grows it on every side.
    """
    sign = Team(attacker_team).attack_sign
    depth_coord = sign * point[0]
    hl = geometry.half_length
    return (
        hl - geometry.goal_box_depth - margin <= depth_coord <= hl + margin
        and abs(point[1]) <= 0.5 * geometry.goal_box_width + margin
    )


def in_field(geometry: FieldGeometry, point) -> bool:
    return abs(point[0]) <= geometry.half_length and abs(point[1]) <= geometry.half_width


@dataclass(frozen=True)
class RobotState:
    pose: Pose2D
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    upright: bool = True
    team: Team = Team.HOME
    id: int = 0


@dataclass(frozen=True)
class BallState:
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    history: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        # pad with the current position until three samples exist
        hist = tuple(tuple(map(float, p)) for p in self.history)[-3:]
        pad = (tuple(map(float, self.position)),) * (3 - len(hist))
        object.__setattr__(self, "history", pad + hist)


@dataclass
class WorldState:
    """Array-backed world state.

    The simulator kernel mutates these arrays in place, so the record-style
    views (:attr:`robots`, :attr:`ball`) are snapshots built on access.

    Array layout:
      pose      (n, 3)  x, y, theta
      vel       (n, 3)  egocentric vx, vy, omega
      upright   (n,)    uint8
      fall_timer(n,)    seconds until a fallen robot stands up
      team      (n,)    int8 Team values
      ball_pos  (2,), ball_vel (2,), ball_hist (3, 2) oldest first
    """

    pose: np.ndarray
    vel: np.ndarray
    upright: np.ndarray
    fall_timer: np.ndarray
    team: np.ndarray
    ball_pos: np.ndarray
    ball_vel: np.ndarray
    ball_hist: np.ndarray
    tick: int = 0
    dt: float = 0.05
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_parts(cls, robots: list[RobotState], ball: BallState, tick: int = 0, dt: float = 0.05) -> "WorldState":
        n = len(robots)
        for i, r in enumerate(robots):
            if r.id != i:
                raise ValueError(f"robot ids must equal their index (got id {r.id} at {i})")
        pose = np.array([[r.pose.x, r.pose.y, r.pose.theta] for r in robots], dtype=np.float64).reshape(n, 3)
        vel = np.array([r.velocity for r in robots], dtype=np.float64).reshape(n, 3)
        upright = np.array([1 if r.upright else 0 for r in robots], dtype=np.uint8)
        vel[upright == 0] = 0.0
        return cls(
            pose=pose,
            vel=vel,
            upright=upright,
            fall_timer=np.zeros(n, dtype=np.float64),
            team=np.array([int(r.team) for r in robots], dtype=np.int8),
            ball_pos=np.array(ball.position, dtype=np.float64),
            ball_vel=np.array(ball.velocity, dtype=np.float64),
            ball_hist=np.array(ball.history, dtype=np.float64),
            tick=tick,
            dt=dt,
        )

    @property
    def n_robots(self) -> int:
        return self.pose.shape[0]

    def robot_pose(self, i: int) -> Pose2D:
        p = self.pose[i]
        return Pose2D(float(p[0]), float(p[1]), float(p[2]))

    def robot(self, i: int) -> RobotState:
        return RobotState(
            pose=self.robot_pose(i),
            velocity=tuple(float(v) for v in self.vel[i]),
            upright=bool(self.upright[i]),
            team=Team(int(self.team[i])),
            id=i,
        )

    @property
    def robots(self) -> list[RobotState]:
        return [self.robot(i) for i in range(self.n_robots)]

    @property
    def ball(self) -> BallState:
        return BallState(
            position=(float(self.ball_pos[0]), float(self.ball_pos[1])),
            velocity=(float(self.ball_vel[0]), float(self.ball_vel[1])),
            history=tuple((float(h[0]), float(h[1])) for h in self.ball_hist),
        )

    def team_ids(self, team: Team) -> list[int]:
        return [i for i in range(self.n_robots) if self.team[i] == int(team)]

    def copy(self) -> "WorldState":
        return WorldState(
            pose=self.pose.copy(),
            vel=self.vel.copy(),
            upright=self.upright.copy(),
            fall_timer=self.fall_timer.copy(),
            team=self.team.copy(),
            ball_pos=self.ball_pos.copy(),
            ball_vel=self.ball_vel.copy(),
            ball_hist=self.ball_hist.copy(),
            tick=self.tick,
            dt=self.dt,
            meta=dict(self.meta),
        )

    def same_as(self, other: "WorldState") -> bool:
        """Bit-exact comparison of all state arrays and the tick."""
        return (
            self.tick == other.tick
            and self.dt == other.dt
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("pose", "vel", "upright", "fall_timer", "team", "ball_pos", "ball_vel", "ball_hist")
            )
        )
