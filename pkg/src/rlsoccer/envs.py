"""Single-learner training environments built from scenario specs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .behavior import SCRIPTS, ScriptConfig, scripted_marker
from .geometry import Team, WorldState
from .policy_io import ActionMemory, SPECS, PolicyName, build_observation, decode_action
from .rewards import RewardConfig, ScenarioSpec, Terminal, is_terminal, reward, spawn, strategy_position
from .simulator import SimConfig, SimRng, Simulator, stream_seed


@dataclass
class StepResult:
    obs: np.ndarray  # (policy_robots, obs_dim), already reset when done
    reward: float
    done: bool
    terminal: Terminal
    episode_return: float | None  # set on the step that ends an episode
    episode_length: int | None


class SoccerEnv:
    """One scenario instance. The leading ``policy_robots`` HOME robots take
    policy actions; only robot 0 (the learner) is rewarded.

    Episode ``k`` of environment ``index`` under ``seed`` is a pure function of
    those three numbers, so vectorized collection is order independent.
    """

    def __init__(self, spec: ScenarioSpec, sim_config: SimConfig | None = None,
                 reward_config: RewardConfig | None = None, seed: int = 0, index: int = 0,
                 script_config: ScriptConfig | None = None):
        base = sim_config or SimConfig()
        if spec.geometry is not None:
            base = replace(base, geometry=spec.geometry)
        self.config = base.with_fidelity(spec.fidelity.value)
        self.spec = spec
        rc = reward_config or RewardConfig()
        if spec.timeout is not None:
            rc = replace(rc, episode_timeout=spec.timeout)
        self.reward_config = rc
        self.pspec = SPECS[spec.policy]
        self.script_config = script_config or ScriptConfig()
        self.seed = int(seed)
        self.index = int(index)
        self._spawn_rng = np.random.Generator(np.random.PCG64(stream_seed(self.seed, 3, self.index)))
        self.n_policy = spec.policy_robots
        self.episode = -1
        self.world: WorldState | None = None
        self.sim: Simulator | None = None

    # per-episode state
    def reset(self) -> np.ndarray:
        self.episode += 1
        episode_seed = int(self._spawn_rng.integers(0, 2**63))
        self.rng = SimRng(episode_seed)
        world = spawn(self.spec, self.rng.stream("spawn"), self.config.geometry, self.config.dt)
        self.world = world
        self.sim = Simulator(self.config, world, self.rng)
        self.memory = [ActionMemory() for _ in range(self.n_policy)]
        self.ret = 0.0
        self.length = 0
        self._strategy = self._strategy_now()
        return self.observe()

    def _strategy_now(self):
        if self.spec.policy is PolicyName.POSITIONING:
            return strategy_position(self.world, 0, self.config.geometry)
        return None

    def observe(self) -> np.ndarray:
        rows = [
            build_observation(self.pspec, self.world, i, self.config, self.rng.obs(i), self._strategy)
            for i in range(self.n_policy)
        ]
        return np.stack(rows)

    def scripted_commands(self) -> list:
        w = self.world
        cmds = []
        n_home = len(self.spec.home)
        for i in range(self.n_policy, w.n_robots):
            if i < n_home:
                script = SCRIPTS[self.spec.teammate_script] if self.spec.teammate_script else None
                weakened = False
            else:
                binding = self.spec.opponents[i - n_home]
                script = SCRIPTS[binding.script]
                weakened = binding.weakened
            if script is None:
                cmds.append(None)
            elif script is scripted_marker:
                cmds.append(script(w, i, self.config, weakened, self.script_config, target_id=0))
            else:
                cmds.append(script(w, i, self.config, weakened, self.script_config))
        return cmds

    def step(self, actions: np.ndarray) -> StepResult:
        w = self.world
        commands = [
            decode_action(self.pspec, actions[i], w.pose[i], self.config, self.memory[i])
            for i in range(self.n_policy)
        ]
        commands += self.scripted_commands()
        prev = w.copy()
        prev_strategy = self._strategy
        events = self.sim.step(commands)
        self._strategy = self._strategy_now()
        strat = (prev_strategy, self._strategy) if prev_strategy is not None else None
        r = reward(self.spec.policy, prev, w, events, self.reward_config, self.config.geometry, 0, strat)
        self.ret += r
        self.length += 1
        term = is_terminal(w, events, self.length * self.config.dt, self.reward_config, Team.HOME)
        if term is Terminal.RUNNING:
            return StepResult(self.observe(), r, False, term, None, None)
        ret, length = self.ret, self.length
        return StepResult(self.reset(), r, True, term, ret, length)
