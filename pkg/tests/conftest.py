import copy
import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from asymgame.model import load_model, model_from_dict, preset_path

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


BASE = {
    "K": 2,
    "R": [[0.0, 0.0], [0.0, 0.0]],
    "b": ["0", "0"],
    "sigma": "1",
    "g": {f"{k},{i},{j}": "0" for k in range(2) for i in range(2) for j in range(2)},
    "r": 1.0, "nI": 2, "nJ": 2, "eps": 0.5, "y_min": -2.0, "y_max": 2.0,
}


def make_model(**overrides):
    d = copy.deepcopy(BASE)
    d.update(overrides)
    return model_from_dict(d)


def model_dict(**overrides):
    d = copy.deepcopy(BASE)
    d.update(overrides)
    return d


@pytest.fixture(scope="session")
def presets():
    return {name: load_model(preset_path(name)) for name in ("constant", "aumann_maschler", "noinfo", "full")}


@pytest.fixture
def write_model(tmp_path):
    def _write(d, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(d))
        return path
    return _write


# -- acceptance summary ----------------------------------------------------------------
# test_acceptance.py records one line per criterion here; the lines are echoed at the
# end of the run so they show up even when output capturing is on.

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
