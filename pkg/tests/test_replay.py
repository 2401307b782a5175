import json

import pytest

from rlsoccer.evaluation import ExperimentName, record_episode, run_conditions
from rlsoccer.replay import ReplayMismatch, read_trace, verify, world_from_dict, world_to_dict
from rlsoccer.simulator import SimConfig, make_world


@pytest.fixture(scope="module")
def trace(random_weights, tmp_path_factory):
    path = tmp_path_factory.mktemp("trace") / "t.jsonl"
    out = record_episode(ExperimentName.DECOMPOSITION_1V2, "full", 0, 0, random_weights, path)
    return path, out


def test_world_dict_round_trip():
    w = make_world(SimConfig(), [(0.1, 0.2, 0.3, 0), (-1.0, 0.5, 2.0, 1)], ball=(0.4, 0.1), ball_velocity=(1.0, 0.0))
    assert world_from_dict(json.loads(json.dumps(world_to_dict(w)))).same_as(w)


def test_trace_layout(trace):
    path, out = trace
    header, ticks, footer = read_trace(path)
    assert header["meta"]["terminal"] == out.terminal
    assert len(ticks) == len(out.trace) >= 1 and footer is not None
    assert [t["tick"] for t in ticks] == list(range(1, len(ticks) + 1))


def test_verify_reproduces_terminal_event(trace):
    path, _ = trace
    _, ticks, _ = read_trace(path)
    result = verify(path)
    assert result["ticks"] == len(ticks)
    recorded = next((e for t in reversed(ticks) for e in t["events"]), None)
    assert result["terminal_event"] == recorded


def test_recorded_outcome_matches_unrecorded(trace, random_weights):
    _, out = trace
    rep = run_conditions(ExperimentName.DECOMPOSITION_1V2, 1, random_weights, conditions=["full"])
    assert rep.conditions["full"].terminals == {out.terminal: 1}


def _rewrite(src, dst, edit):
    lines = src.read_text().splitlines()
    recs = [json.loads(line) for line in lines]
    edit(recs)
    dst.write_text("".join(json.dumps(r) + "\n" for r in recs))


def test_tampered_state_detected(trace, tmp_path):
    path, _ = trace

    def edit(recs):
        recs[1]["ball"]["x"] += 0.01

    _rewrite(path, tmp_path / "bad.jsonl", edit)
    with pytest.raises(ReplayMismatch):
        verify(tmp_path / "bad.jsonl")


def test_tampered_seed_detected(trace, tmp_path):
    path, _ = trace
    _, ticks, _ = read_trace(path)
    if len(ticks) < 5:
        pytest.skip("episode too short")

    def edit(recs):
        recs[0]["seed"] += 1

    _rewrite(path, tmp_path / "bad.jsonl", edit)
    with pytest.raises(ReplayMismatch):
        verify(tmp_path / "bad.jsonl")


def test_bad_lines_rejected(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"type": "tick", "tick": 1}\n')
    with pytest.raises(ValueError, match="header"):
        read_trace(p)
    p.write_text("not json\n")
    with pytest.raises(ValueError, match=":1:"):
        read_trace(p)
