import pytest

from gpattitude.config import remaneuver, stabilization
from gpattitude.scenario import run_paired


@pytest.fixture(scope="session")
def stab_runs():
    """Paired stabilization runs (timing recorded) shared across test modules."""
    cfg = stabilization()
    cfg.record_timing = True
    return cfg, run_paired(cfg, ["frozen-gp", "rosgp"])


@pytest.fixture(scope="session")
def reman_runs():
    cfg = remaneuver()
    return cfg, run_paired(cfg, ["baseline", "frozen-gp", "rosgp"])
