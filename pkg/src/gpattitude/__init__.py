"""Learning-based attitude control of a combined spacecraft.

Submodules:

- ``attitude``: quaternion kinematics, rigid-body dynamics and the plant truth
- ``gp``: full GP regression with an SE-ARD kernel
- ``sparse``: FITC sparse GP
- ``rosgp``: recursive online update of the sparse-GP weights
- ``controller``: variance-scheduled feedback law and ultimate bounds
- ``scenario``, ``metrics``, ``montecarlo``: closed-loop harness
"""

from .attitude import AttitudeState, DivergenceError, PlantTruth, quat_error, quat_product, step
from .config import ScenarioConfig, remaneuver, stabilization
from .controller import GainSchedule, baseline_pd, control, ultimate_bounds
from .gp import Dataset, GPModel, Hyperparams, gp_fit, gp_predict
from .metrics import metrics
from .montecarlo import monte_carlo
from .rosgp import RosgpState, rosgp_init, rosgp_predict, rosgp_update
from .runlog import RunLog
from .scenario import collect_training_data, run_paired, run_scenario
from .sparse import SPGPModel, spgp_fit, spgp_predict

__version__ = "0.1.0"
