"""Seeded stepped simulation of robots and ball at two fidelity levels."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _pykernel as K
from .geometry import BallState, FieldGeometry, Team, WorldState, normalize_angle, to_egocentric
from .kernel import step_kernel


class Fidelity(str, enum.Enum):
    LOW = "LOW"
    HIGH = "HIGH"


class ConfigError(ValueError):
    """Invalid configuration value; ``key`` is the dotted key path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class KickOutOfRange(RuntimeError):
    pass


@dataclass(frozen=True)
class FidelityProfile:
    name: Fidelity = Fidelity.LOW
    actuation_lag_tau: float = 0.0
    velocity_noise_std: float = 0.0
    kick_angle_noise_std: float = 0.0
    kick_speed_noise_frac: float = 0.0
    fall_prob_per_step_at_max_speed: float = 0.0
    obs_ball_noise_std: float = 0.0
    contact_restitution: float = 0.5

    @classmethod
    def low(cls) -> "FidelityProfile":
        return cls()

    @classmethod
    def high(cls) -> "FidelityProfile":
        return cls(
            name=Fidelity.HIGH,
            actuation_lag_tau=0.3,
            velocity_noise_std=0.03,
            kick_angle_noise_std=0.15,
            kick_speed_noise_frac=0.2,
            fall_prob_per_step_at_max_speed=0.002,
            obs_ball_noise_std=0.05,
            contact_restitution=0.3,
        )

    @classmethod
    def named(cls, name) -> "FidelityProfile":
        return cls.high() if Fidelity(name) is Fidelity.HIGH else cls.low()

    def validate(self, prefix: str = "fidelity") -> None:
        for key in (
            "actuation_lag_tau", "velocity_noise_std", "kick_angle_noise_std",
            "kick_speed_noise_frac", "fall_prob_per_step_at_max_speed", "obs_ball_noise_std",
            "contact_restitution",
        ):
            v = getattr(self, key)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{prefix}.{key}", "must be finite and >= 0")
        if self.fall_prob_per_step_at_max_speed > 1:
            raise ConfigError(f"{prefix}.fall_prob_per_step_at_max_speed", "must be a probability")
        if self.contact_restitution > 1:
            raise ConfigError(f"{prefix}.contact_restitution", "must be <= 1")
        if Fidelity(self.name) is Fidelity.LOW:
            for key in (
                "actuation_lag_tau", "velocity_noise_std", "kick_angle_noise_std",
                "kick_speed_noise_frac", "fall_prob_per_step_at_max_speed", "obs_ball_noise_std",
            ):
                if getattr(self, key) != 0:
                    raise ConfigError(f"{prefix}.{key}", "LOW profile must be noiseless")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    max_linear_speed: float = 0.30
    max_angular_speed: float = 1.5
    ball_friction_decel: float = 0.4
    kick_speed: float = 2.5
    kick_range: float = 0.25
    kick_half_angle: float = 0.5
    seed: int = 0
    fidelity: FidelityProfile = field(default_factory=FidelityProfile.low)
    geometry: FieldGeometry = field(default_factory=FieldGeometry)
    fall_recovery_time: float = 3.0
    apron: float = 1.0
    collision_iters: int = 4
    # skill layer constants
    kick_align_tolerance: float = 0.15
    approach_fraction: float = 0.8
    arrival_radius: float = 0.10
    obstacle_inflation: float = 0.25
    ball_clearance: float = 0.05
    turn_gain: float = 4.0

    def validate(self, prefix: str = "sim") -> None:
        positive = (
            "dt", "max_linear_speed", "max_angular_speed", "ball_friction_decel", "kick_speed",
            "kick_range", "kick_half_angle", "fall_recovery_time", "arrival_radius", "turn_gain",
        )
        for key in positive:
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{prefix}.{key}", "must be a finite positive number")
        for key in ("apron", "obstacle_inflation", "ball_clearance", "kick_align_tolerance"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{prefix}.{key}", "must be finite and >= 0")
        if not 0 < self.approach_fraction <= 1:
            raise ConfigError(f"{prefix}.approach_fraction", "must be in (0, 1]")
        if self.collision_iters < 1:
            raise ConfigError(f"{prefix}.collision_iters", "must be >= 1")
        if not self.kick_range > self.geometry.robot_half_length:
            raise ConfigError(f"{prefix}.kick_range", "must exceed robot_half_length")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"{prefix}.seed", "must be a 64-bit unsigned integer")
        self.fidelity.validate(f"{prefix}.fidelity")

    def with_fidelity(self, fidelity) -> "SimConfig":
        if not isinstance(fidelity, FidelityProfile):
            fidelity = FidelityProfile.named(fidelity)
        return replace(self, fidelity=fidelity)

    @property
    def lag_alpha(self) -> float:
        tau = self.fidelity.actuation_lag_tau
        return 1.0 if tau <= 0 else 1.0 - math.exp(-self.dt / tau)

    def kernel_params(self) -> np.ndarray:
        g = self.geometry
        p = np.zeros(K.N_PARAMS, dtype=np.float64)
        p[K.P_DT] = self.dt
        p[K.P_VMAX] = self.max_linear_speed
        p[K.P_WMAX] = self.max_angular_speed
        p[K.P_BALL_DECEL] = self.ball_friction_decel
        p[K.P_LAG_ALPHA] = self.lag_alpha
        p[K.P_HALF_LEN] = g.half_length
        p[K.P_HALF_WID] = g.half_width
        p[K.P_GOAL_HALF] = 0.5 * g.goal_width
        p[K.P_ROBOT_HL] = g.robot_half_length
        p[K.P_ROBOT_HW] = g.robot_half_width
        p[K.P_BALL_R] = g.ball_radius
        p[K.P_RESTITUTION] = self.fidelity.contact_restitution
        p[K.P_APRON] = self.apron
        p[K.P_FALL_PROB] = self.fidelity.fall_prob_per_step_at_max_speed
        p[K.P_FALL_RECOVERY] = self.fall_recovery_time
        p[K.P_ITERS] = self.collision_iters
        return p


class EventKind(str, enum.Enum):
    GOAL_HOME = "GOAL_HOME"
    GOAL_AWAY = "GOAL_AWAY"
    OUT_OF_BOUNDS = "OUT_OF_BOUNDS"
    FALL = "FALL"
    KICK_EXECUTED = "KICK_EXECUTED"


@dataclass(frozen=True)
class SimEvent:
    kind: EventKind
    tick: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "tick": self.tick, **({"detail": self.detail} if self.detail else {})}


_STREAM_KINDS = {"ball": 0, "motion": 1, "obs": 2, "spawn": 3, "policy": 4}


def stream_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))


class SimRng:
    """Named random streams split from one master seed.

    Each robot owns its own motion and observation streams and the ball owns
    one, so adding a robot never shifts anybody else's random numbers.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[tuple[str, int], np.random.Generator] = {}

    def stream(self, kind: str, index: int = 0) -> np.random.Generator:
        key = (kind, index)
        gen = self._streams.get(key)
        if gen is None:
            gen = np.random.Generator(np.random.PCG64(stream_seed(self.seed, _STREAM_KINDS[kind], index)))
            self._streams[key] = gen
        return gen

    def ball(self) -> np.random.Generator:
        return self.stream("ball")

    def motion(self, robot_id: int) -> np.random.Generator:
        return self.stream("motion", robot_id)

    def obs(self, robot_id: int) -> np.random.Generator:
        return self.stream("obs", robot_id)


def _flags_to_events(flags: int, status: np.ndarray, tick: int) -> list[SimEvent]:
    events = []
    if flags & K.F_GOAL_HOME:
        events.append(SimEvent(EventKind.GOAL_HOME, tick))
    if flags & K.F_GOAL_AWAY:
        events.append(SimEvent(EventKind.GOAL_AWAY, tick))
    if flags & K.F_OUT:
        events.append(SimEvent(EventKind.OUT_OF_BOUNDS, tick))
    if flags & K.F_FALL:
        for i in np.flatnonzero(status & K.S_FELL):
            events.append(SimEvent(EventKind.FALL, tick, {"robot": int(i)}))
    return events


def check_fall(robot, config: SimConfig, rng: np.random.Generator) -> bool:
    """Sample whether ``robot`` falls this tick (HIGH profile only)."""
    p_max = config.fidelity.fall_prob_per_step_at_max_speed
    if p_max <= 0 or not robot.upright:
        return False
    vx, vy = robot.velocity[0], robot.velocity[1]
    speed = min(math.sqrt(vx * vx + vy * vy), config.max_linear_speed)
    return bool(rng.random() < p_max * (speed / config.max_linear_speed))


def observe_point(world: WorldState, observer_id: int, point, config: SimConfig, rng: np.random.Generator | None):
    """Egocentric view of a global point with isotropic observation noise."""
    ex, ey = to_egocentric(world.robot_pose(observer_id), point)
    sigma = config.fidelity.obs_ball_noise_std
    if sigma > 0:
        nx, ny = rng.standard_normal(2)
        ex += sigma * nx
        ey += sigma * ny
    return (ex, ey)


def observe_ball(world: WorldState, observer_id: int, config: SimConfig, rng: np.random.Generator | None):
    return observe_point(world, observer_id, world.ball_pos, config, rng)


def resolve_kick(world: WorldState, kicker_id: int, desired_angle: float, config: SimConfig,
                 rng: np.random.Generator | None) -> tuple[BallState, SimEvent]:
    """Launch the ball from ``kicker_id`` along a global angle."""
    from .skills import can_kick

    if not (world.upright[kicker_id] and can_kick(world, kicker_id, config)):
        raise KickOutOfRange(f"robot {kicker_id} cannot reach the ball")
    angle = float(desired_angle)
    speed = config.kick_speed
    fid = config.fidelity
    if fid.kick_angle_noise_std > 0 or fid.kick_speed_noise_frac > 0:
        za, zs = rng.standard_normal(2)
        angle += fid.kick_angle_noise_std * za
        speed = max(0.0, speed * (1.0 + fid.kick_speed_noise_frac * zs))
    vel = (speed * math.cos(angle), speed * math.sin(angle))
    ball = BallState(
        position=(float(world.ball_pos[0]), float(world.ball_pos[1])),
        velocity=vel,
        history=tuple(map(tuple, world.ball_hist.tolist())),
    )
    event = SimEvent(EventKind.KICK_EXECUTED, world.tick, {"robot": int(kicker_id), "angle": normalize_angle(angle)})
    return ball, event


class Simulator:
    """Stateful stepper over an array-backed :class:`WorldState`.

    Not shareable mid-step; run independent instances for parallel rollouts.
    """

    def __init__(self, config: SimConfig, world: WorldState, rng: SimRng | None = None):
        self.config = config
        self.world = world
        self.rng = rng if rng is not None else SimRng(config.seed)
        self.params = config.kernel_params()
        n = world.n_robots
        self.cmd = np.zeros((n, 3), dtype=np.float64)
        self._noise = np.zeros((n, 3), dtype=np.float64)
        self._fall_u = np.ones(n, dtype=np.float64)
        self._status = np.zeros(n, dtype=np.uint8)
        fid = config.fidelity
        self._vel_noise = fid.velocity_noise_std
        self._fall = fid.fall_prob_per_step_at_max_speed > 0
        self.bad_commands = 0

    def _draw_motion_noise(self) -> None:
        sigma = self._vel_noise
        for i in range(self.world.n_robots):
            gen = self.rng.motion(i)
            if sigma > 0:
                nx, ny = gen.standard_normal(2)
                self._noise[i, 0] = sigma * nx
                self._noise[i, 1] = sigma * ny
            if self._fall:
                self._fall_u[i] = gen.random()

    def step_velocities(self, cmd: np.ndarray | None = None) -> list[SimEvent]:
        """Advance one tick with egocentric velocity commands, shape (n, 3)."""
        w = self.world
        if cmd is None:
            cmd = self.cmd
        if self._vel_noise > 0 or self._fall:
            self._draw_motion_noise()
        flags = step_kernel(
            w.pose, w.vel, w.upright, w.fall_timer, cmd, self._noise, self._fall_u,
            w.ball_pos, w.ball_vel, w.ball_hist, self.params, self._status,
        )
        w.tick += 1
        if flags & K.F_BAD_CMD:
            self.bad_commands += 1
        w.meta["contact"] = bool(flags & K.F_CONTACT)
        if flags & (K.F_GOAL_HOME | K.F_GOAL_AWAY | K.F_OUT | K.F_FALL):
            return _flags_to_events(flags, self._status, w.tick)
        return []

    def step(self, commands) -> list[SimEvent]:
        """Advance one tick from per-robot skill commands (None means stand)."""
        from .skills import resolve_command

        w = self.world
        kicks = []
        for i in range(w.n_robots):
            command = commands[i] if i < len(commands) else None
            if command is None or not w.upright[i]:
                self.cmd[i] = 0.0
                continue
            vx, vy, om, kick_angle = resolve_command(w, i, command, self.config)
            self.cmd[i, 0] = vx
            self.cmd[i, 1] = vy
            self.cmd[i, 2] = om
            if kick_angle is not None:
                kicks.append((i, kick_angle))
        events = []
        for i, angle in kicks:
            ball, event = resolve_kick(w, i, angle, self.config, self.rng.ball())
            w.ball_vel[0] = ball.velocity[0]
            w.ball_vel[1] = ball.velocity[1]
            events.append(replace(event, tick=w.tick + 1))
        events.extend(self.step_velocities())
        return events


def step(world: WorldState, commands, config: SimConfig, rng: SimRng) -> tuple[WorldState, list[SimEvent]]:
    """Functional transition: returns the successor world, leaving ``world`` untouched."""
    sim = Simulator(config, world.copy(), rng)
    events = sim.step(commands)
    return sim.world, events


def make_world(config: SimConfig, robots, ball=(0.0, 0.0), ball_velocity=(0.0, 0.0)) -> WorldState:
    """Convenience constructor: ``robots`` is a list of (x, y, theta, team)."""
    from .geometry import Pose2D, RobotState

    states = [
        RobotState(pose=Pose2D(x, y, th), team=Team(team), id=i)
        for i, (x, y, th, team) in enumerate(robots)
    ]
    return WorldState.from_parts(states, BallState(position=tuple(ball), velocity=tuple(ball_velocity)), dt=config.dt)
