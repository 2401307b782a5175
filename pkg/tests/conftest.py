import os
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
WEIGHTS = REPO / "weights"


@pytest.fixture
def weights_dir():
    if not (WEIGHTS / "mid_field.rlsw").exists():
        pytest.skip("shipped weights missing; run `rlsoccer train --recipe all`")
    return WEIGHTS


def pytest_configure(config):
    os.environ.setdefault("HYPOTHESIS_PROFILE", "default")


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def random_weights(tmp_path_factory):
    """Untrained weight files for every slot, for harness plumbing tests."""
    from rlsoccer.evaluation import WEIGHT_FILES
    from rlsoccer.ppo import MlpPolicy

    out = tmp_path_factory.mktemp("weights")
    for i, (key, fname) in enumerate(WEIGHT_FILES.items()):
        name = key.replace("_LOW", "").replace("_HIGH", "")
        MlpPolicy.for_policy(name, seed=100 + i).save(out / fname)
    return out
