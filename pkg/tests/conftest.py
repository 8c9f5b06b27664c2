import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from apla_lab.dynamics import LearnerParams
from apla_lab.games import NoiseModel, stag_hunt


@pytest.fixture(scope="session")
def stag():
    return stag_hunt()


@pytest.fixture(scope="session")
def demo_params():
    """The stag-hunt demo configuration (aspiration mode)."""
    return LearnerParams(
        epsilon=0.06, lam=0.04, nu=0.06, h=0.04, c=10.0,
        noise=NoiseModel(0.02), mode="apla", seed=20_240_601,
    )


@pytest.fixture(scope="session")
def demo_params_pla(demo_params):
    from dataclasses import replace

    return replace(demo_params, mode="pla")


@pytest.fixture(scope="session")
def mild_stag():
    """Stag hunt with payoffs close enough that single trembles switch
    regimes at Monte-Carlo-resolvable rates."""
    return stag_hunt(5.0, 3.0, 4.5, 4.0)
