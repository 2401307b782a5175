"""Training recipes that produce the shipped weight files."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .policy_io import PolicyName
from .ppo import TrainConfig, TrainResult, train
from .rewards import ScenarioName, scenario
from .simulator import Fidelity

DEFAULT_SCENARIO = {
    PolicyName.MID_FIELD: ScenarioName.MIDFIELD_1V0,
    PolicyName.BALL_DUEL: ScenarioName.BALL_DUEL_2V0,
    PolicyName.NEAR_GOAL: ScenarioName.NEARGOAL_1V0,
    PolicyName.POSITIONING: ScenarioName.POSITIONING,
}


@dataclass(frozen=True)
class Recipe:
    stem: str
    policy: PolicyName
    scenario: ScenarioName
    fidelity: Fidelity | None = None  # override of the scenario's fidelity
    overrides: dict = field(default_factory=dict)  # TrainConfig fields

    def train_config(self, base: TrainConfig | None = None) -> TrainConfig:
        return replace(base or TrainConfig(), **self.overrides)

    def scenario_spec(self):
        spec = scenario(self.scenario)
        return replace(spec, fidelity=self.fidelity) if self.fidelity is not None else spec


RECIPES = {
    r.stem: r
    for r in (
        # narrower exploration: the kick angle integrates the action, so default action noise
        # random-walks it away from the goal
        Recipe("mid_field", PolicyName.MID_FIELD, ScenarioName.MIDFIELD_1V0,
               overrides={"total_steps": 1_000_000, "log_std_init": -2.0, "entropy_coef": 0.0}),
        Recipe("ball_duel", PolicyName.BALL_DUEL, ScenarioName.BALL_DUEL_2V0, overrides={"total_steps": 1_000_000}),
        Recipe("near_goal", PolicyName.NEAR_GOAL, ScenarioName.NEARGOAL_1V0, Fidelity.LOW,
               overrides={"total_steps": 1_000_000}),
        Recipe("near_goal_high", PolicyName.NEAR_GOAL, ScenarioName.NEARGOAL_1V0, Fidelity.HIGH,
               overrides={"total_steps": 1_000_000}),
        Recipe("positioning", PolicyName.POSITIONING, ScenarioName.POSITIONING, overrides={"total_steps": 500_000}),
    )
}


def run_recipe(recipe: Recipe, out_dir, base: TrainConfig | None = None, sim_config=None, reward_config=None,
               log=None) -> TrainResult:
    return train(recipe.policy, recipe.scenario_spec(), recipe.train_config(base), sim_config, reward_config,
                 out_dir=out_dir, log=log, file_stem=recipe.stem)
