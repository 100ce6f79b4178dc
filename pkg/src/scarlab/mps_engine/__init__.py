"""Matrix-product-state engine: states, the model MPO, TDVP evolution,
and the MPS route to the pair autocorrelator."""

from .correlator import autocorrelator_mps
from .mpo import MPOOperator, build_mpo
from .state import MPS, apply_squared_raising, product_mps
from .tdvp import (
    SchedulePhase,
    default_schedule,
    evolve_schedule,
    expectation_mpo,
    tdvp1_step,
    tdvp2_step,
    trajectory_to_ndjson,
)

__all__ = [
    "MPS",
    "product_mps",
    "apply_squared_raising",
    "MPOOperator",
    "build_mpo",
    "SchedulePhase",
    "default_schedule",
    "evolve_schedule",
    "expectation_mpo",
    "tdvp1_step",
    "tdvp2_step",
    "trajectory_to_ndjson",
    "autocorrelator_mps",
]
