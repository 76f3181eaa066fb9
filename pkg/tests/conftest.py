import numpy as np
import pytest

from abc_engine.reference_table import build_reference_table
from core.rng import SeededRng
from models.twisted_normal import TwistedNormalModel, toy_simulator_model


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale Monte Carlo checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def toy_p3():
    return TwistedNormalModel(3)


@pytest.fixture(scope="session")
def toy_table_p3(toy_p3):
    """Small shared toy reference table (20k rows)."""
    return build_reference_table(toy_simulator_model(toy_p3), 20_000, SeededRng(7, ("fixture",)))
