"""Simulation and regeneration analysis for the one-dimensional X + Y -> 2X front."""

__version__ = "0.1.0"

from .rng import ParameterError, RngStream, derive_seed
from .process import (
    Configuration,
    EventLog,
    InitialConditionSpec,
    Stop,
    couple_runs,
    init,
    run_until,
)

__all__ = [
    "__version__",
    "Configuration",
    "EventLog",
    "InitialConditionSpec",
    "ParameterError",
    "RngStream",
    "Stop",
    "couple_runs",
    "derive_seed",
    "init",
    "run_until",
]
