import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from dynamics import DroneParams, TankParams, TankState  # noqa: E402
from scenario import parse_scenario  # noqa: E402

TINY_SCENARIO = """
n_agents = 2
operation_time = 1.0
dt = 0.1
horizon = 5
n_samples = 60
initial_positions = 2,2; 18,18
wasserstein_every = 0
field.domain = 0,0,20,20
field.means = 6,6; 14,13
field.covariances = 4,0,0,4; 5,1,1,3
field.weights = 0.5,0.5
grid.cell_size = 0.5
mpc.horizon = 5
smc.n_bases = 8
smc.resolution = 1.0
"""


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def drone():
    return DroneParams()


@pytest.fixture
def tank_params():
    return TankParams()


@pytest.fixture
def full_tank(tank_params):
    return TankState.full(tank_params)


@pytest.fixture
def tiny_config():
    return parse_scenario(TINY_SCENARIO, source="tiny")


@pytest.fixture
def scenarios_dir():
    return ROOT / "scenarios"


@pytest.fixture
def tiny_file(tmp_path):
    path = tmp_path / "tiny.env"
    path.write_text(TINY_SCENARIO, encoding="utf-8")
    return path
