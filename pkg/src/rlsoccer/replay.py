"""JSON-lines episode traces and replay verification.

Line 1 is a header with the simulator config, RNG seed and initial world;
every following line is one tick with the commands issued, the events
raised and any selector decisions. Replaying feeds the recorded commands
back through a fresh simulator built from the header.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .config import sim_config_from_dict
from .geometry import WorldState
from .simulator import SimConfig, SimRng, Simulator
from .skills import SkillCommand

TRACE_SCHEMA = 1


class ReplayMismatch(AssertionError):
    pass


def world_to_dict(world: WorldState) -> dict:
    return {
        "pose": world.pose.tolist(),
        "vel": world.vel.tolist(),
        "upright": world.upright.tolist(),
        "fall_timer": world.fall_timer.tolist(),
        "team": world.team.tolist(),
        "ball_pos": world.ball_pos.tolist(),
        "ball_vel": world.ball_vel.tolist(),
        "ball_hist": world.ball_hist.tolist(),
        "tick": world.tick,
        "dt": world.dt,
    }


def world_from_dict(d: dict) -> WorldState:
    import numpy as np

    return WorldState(
        pose=np.array(d["pose"], dtype=np.float64),
        vel=np.array(d["vel"], dtype=np.float64),
        upright=np.array(d["upright"], dtype=np.uint8),
        fall_timer=np.array(d["fall_timer"], dtype=np.float64),
        team=np.array(d["team"], dtype=np.int8),
        ball_pos=np.array(d["ball_pos"], dtype=np.float64),
        ball_vel=np.array(d["ball_vel"], dtype=np.float64),
        ball_hist=np.array(d["ball_hist"], dtype=np.float64),
        tick=int(d["tick"]),
        dt=float(d["dt"]),
    )


def tick_state(world: WorldState) -> dict:
    """Per-tick robot and ball snapshot as stored in traces."""
    return {
        "robots": [{"id": i, "team": int(world.team[i]), "x": float(world.pose[i, 0]), "y": float(world.pose[i, 1]),
                    "theta": float(world.pose[i, 2]), "upright": bool(world.upright[i])}
                   for i in range(world.n_robots)],
        "ball": {"x": float(world.ball_pos[0]), "y": float(world.ball_pos[1]),
                 "vx": float(world.ball_vel[0]), "vy": float(world.ball_vel[1])},
    }


def export_trace(path, config: SimConfig, seed: int, initial: WorldState, ticks: list, final: WorldState,
                 meta: dict | None = None) -> None:
    """Write a header line, one line per tick and a footer with the final state."""
    with open(path, "w") as fh:
        header = {"type": "header", "schema": TRACE_SCHEMA, "seed": seed, "config": asdict(config),
                  "world": world_to_dict(initial), "meta": meta or {}}
        fh.write(json.dumps(header, default=str) + "\n")
        for t in ticks:
            fh.write(json.dumps({"type": "tick", **t}) + "\n")
        fh.write(json.dumps({"type": "footer", "world": world_to_dict(final)}) + "\n")


def read_trace(path) -> tuple[dict, list[dict], dict | None]:
    header, ticks, footer = None, [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: {e.msg}") from None
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "tick":
                ticks.append(rec)
            elif kind == "footer":
                footer = rec
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
    if header is None:
        raise ValueError(f"{path}: missing header line")
    if header.get("schema") != TRACE_SCHEMA:
        raise ValueError(f"{path}: unsupported trace schema {header.get('schema')}")
    return header, ticks, footer


def replay(path) -> tuple[WorldState, list[dict]]:
    """Re-simulate a trace; returns the final world and per-tick {events, robots, ball} records."""
    header, ticks, _ = read_trace(path)
    config = sim_config_from_dict(header["config"])
    world = world_from_dict(header["world"])
    sim = Simulator(config, world, SimRng(int(header["seed"])))
    events = []
    for t in ticks:
        cmds = [None if c is None else SkillCommand.from_dict(c) for c in t["commands"]]
        evs = [e.to_dict() for e in sim.step(cmds)]
        events.append({"events": evs, **tick_state(world)})
    return world, events


def verify(path) -> dict:
    """Replay and compare every tick's events and the final state with the recording."""
    header, ticks, footer = read_trace(path)
    world, replayed = replay(path)
    for t, got in zip(ticks, replayed):
        for key in ("events", "robots", "ball"):
            if key in t and got[key] != t[key]:
                raise ReplayMismatch(f"tick {t['tick']}: recorded {key} {t[key]} but replay gave {got[key]}")
    if footer is not None and world_to_dict(world) != footer["world"]:
        raise ReplayMismatch("final state differs from the recording")
    last = next((e for rec in reversed(replayed) for e in rec["events"]), None)
    return {"ticks": len(ticks), "terminal_event": last}
