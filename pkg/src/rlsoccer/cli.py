"""Command-line entry point: train, eval, replay, selftest, print-layouts."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .policy_io import PolicyName, layout_table

DEFAULT_WEIGHTS = "weights"


def _load_config(args):
    return cfgmod.load(args.config)


def cmd_train(args) -> int:
    from .recipes import DEFAULT_SCENARIO, RECIPES, Recipe, run_recipe
    from .rewards import ScenarioName
    from .simulator import Fidelity

    cfg = _load_config(args)
    base = cfg.train
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    if args.recipe:
        names = list(RECIPES) if args.recipe == ["all"] else args.recipe
        recipes = [RECIPES[n] for n in names]
    else:
        if not args.policy:
            print("train: give --policy or --recipe", file=sys.stderr)
            return 2
        policy = PolicyName(args.policy)
        recipes = [Recipe(args.name or policy.value.lower(), policy,
                          ScenarioName(args.scenario) if args.scenario else DEFAULT_SCENARIO[policy],
                          Fidelity(args.fidelity) if args.fidelity else None)]
    for recipe in recipes:
        tc = recipe.train_config(base)
        if args.steps is not None:
            tc = replace(tc, total_steps=args.steps)
        if args.seed is not None:
            tc = replace(tc, seed=args.seed)
        recipe = replace(recipe, overrides={**recipe.overrides, "total_steps": tc.total_steps, "seed": tc.seed})

        def log(row, stem=recipe.stem):
            if not args.quiet:
                print(f"[{stem}] update {row['update']:4d} steps {row['steps']:8d} "
                      f"return {row['mean_return']:8.3f} goal_rate {row['goal_rate']:.2f} "
                      f"entropy {row['entropy']:.3f}", flush=True)

        res = run_recipe(recipe, args.out, base, cfg.sim, cfg.reward, log=log)
        print(f"{recipe.stem}: {res.weights_path} blob {res.weights_hash} "
              f"goal rate (last 100 episodes) {res.goal_rate(100):.3f} in {res.seconds:.0f}s")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import ExperimentName, run_conditions

    cfg = _load_config(args)
    exps = list(ExperimentName) if args.experiment == "all" else [ExperimentName(args.experiment)]
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for exp in exps:
        sim = cfg.sim if args.config else None
        report = run_conditions(exp, args.episodes, args.weights, args.seed or 0, config=sim, selector=cfg.selector,
                                workers=args.workers, scenario=args.scenario)
        print(report.table())
        if out:
            path = out / f"{exp.value.lower()}.json"
            report.save(path)
            print(f"wrote {path}")
    return 0


def cmd_replay(args) -> int:
    from .replay import verify

    if args.verify:
        result = verify(args.verify)
        print(json.dumps(result))
        return 0
    from .evaluation import EXPERIMENT_CONDITIONS, ExperimentName, record_episode

    exp = ExperimentName(args.experiment or "DECOMPOSITION_1V2")
    cond = args.condition or EXPERIMENT_CONDITIONS[exp][0]
    path = Path(args.out or "trace.jsonl")
    if path.suffix != ".jsonl":
        path.mkdir(parents=True, exist_ok=True)
        path = path / f"{exp.value.lower()}_{args.episode}.jsonl"
    outcome = record_episode(exp, cond, args.episode, args.seed or 0, args.weights, path, scenario=args.scenario)
    print(f"wrote {path}: {outcome.terminal} after {outcome.time:.2f}s")
    return 0


def measure_step_rate(seconds: float = 2.0, n_robots: int = 4, use_compiled: bool = True) -> float:
    """Steps per second of the LOW-fidelity velocity stepper with ``n_robots`` robots."""
    from . import kernel
    from .simulator import SimConfig, Simulator, make_world

    config = SimConfig()
    world = make_world(config, [(-1.0 + 0.6 * i, 0.3 * i, 0.0, i % 2) for i in range(n_robots)], ball=(0.5, 0.2))
    sim = Simulator(config, world)
    if not use_compiled:
        import rlsoccer.simulator as simmod

        saved = simmod.step_kernel
        simmod.step_kernel = kernel.python_step_kernel
    try:
        rng = np.random.default_rng(0)
        cmds = rng.uniform(-0.3, 0.3, size=(64, n_robots, 3))
        steps = 0
        t0 = time.perf_counter()
        deadline = t0 + seconds
        while True:
            for k in range(64):
                sim.step_velocities(cmds[k])
            steps += 64
            # keep robots on the field
            if steps % 4096 == 0:
                world.pose[:, :2] = np.clip(world.pose[:, :2], -3.0, 3.0)
            now = time.perf_counter()
            if now >= deadline:
                return steps / (now - t0)
    finally:
        if not use_compiled:
            simmod.step_kernel = saved


def cmd_selftest(args) -> int:
    from . import kernel

    if args.print_layouts:
        print(layout_table())
    ok = True
    # both kernels must agree bit for bit
    from .simulator import SimConfig, SimRng, Simulator, make_world

    for fid in ("LOW", "HIGH"):
        cfg = SimConfig().with_fidelity(fid)
        worlds = []
        for which in ("compiled", "python"):
            w = make_world(cfg, [(-1.0, 0.0, 0.0, 0), (-0.6, 0.1, 3.0, 1), (0.3, -0.4, 1.0, 0), (1.0, 1.0, 2.0, 1)],
                           ball=(-0.8, 0.05), ball_velocity=(1.0, 0.2))
            sim = Simulator(cfg, w, SimRng(7))
            import rlsoccer.simulator as simmod

            saved = simmod.step_kernel
            if which == "python" or kernel.compiled_step_kernel is None:
                simmod.step_kernel = kernel.python_step_kernel
            try:
                rng = np.random.default_rng(1)
                for _ in range(500):
                    sim.step_velocities(rng.uniform(-0.4, 0.4, (4, 3)))
            finally:
                simmod.step_kernel = saved
            worlds.append(w)
        same = worlds[0].same_as(worlds[1])
        ok &= same
        print(f"kernel equivalence ({fid}): {'ok' if same else 'MISMATCH'}")
    rate = measure_step_rate(args.seconds)
    target = args.min_rate
    print(f"kernel: {kernel.KERNEL}")
    print(f"LOW 4-robot step rate: {rate:,.0f} steps/s (target {target:,.0f})")
    passed = rate >= target
    print(f"performance: {'PASS' if passed else 'FAIL'}")
    return 0 if ok and passed else 1


def cmd_print_layouts(args) -> int:
    print(layout_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlsoccer", description="Decomposed RL soccer policies in a 2D simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory (or file for replay)")

    t = sub.add_parser("train", help="train a sub-policy with PPO")
    common(t)
    t.add_argument("--policy", choices=[n.value for n in PolicyName])
    t.add_argument("--scenario")
    t.add_argument("--fidelity", choices=["LOW", "HIGH"])
    t.add_argument("--name", help="weight file stem")
    t.add_argument("--recipe", nargs="+", help="named recipe(s) from the shipped set, or 'all'")
    t.add_argument("--steps", type=int)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train, out=DEFAULT_WEIGHTS)

    e = sub.add_parser("eval", help="run an evaluation experiment")
    common(e)
    e.add_argument("--experiment", default="all")
    e.add_argument("--episodes", type=int, default=200)
    e.add_argument("--weights", default=DEFAULT_WEIGHTS)
    e.add_argument("--workers", type=int, default=0)
    e.add_argument("--scenario", default="GOALIE", choices=["GOALIE", "GOALIE_DEFENDER"])
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="export an episode trace or verify one")
    common(r)
    r.add_argument("--experiment")
    r.add_argument("--condition")
    r.add_argument("--episode", type=int, default=0)
    r.add_argument("--weights", default=DEFAULT_WEIGHTS)
    r.add_argument("--scenario", default="GOALIE", choices=["GOALIE", "GOALIE_DEFENDER"])
    r.add_argument("--verify", metavar="TRACE", help="replay TRACE and check it")
    r.set_defaults(func=cmd_replay)

    s = sub.add_parser("selftest", help="kernel equivalence and step-rate check")
    s.add_argument("--print-layouts", action="store_true")
    s.add_argument("--seconds", type=float, default=2.0)
    s.add_argument("--min-rate", type=float, default=50_000.0)
    s.set_defaults(func=cmd_selftest)

    pl = sub.add_parser("print-layouts", help="print observation/action layouts")
    pl.set_defaults(func=cmd_print_layouts)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigParseError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
