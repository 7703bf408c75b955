"""Cell-free ISAC network simulator.

Joint sensing/communication precoder design for a distributed MIMO
network (convex-concave procedure over second-order cone subproblems)
plus an internal-adversary localization attack that recovers the
network-wide transmit signal and triangulates the sensed target.
"""

from .scenario import (
    SimulationConfig,
    NetworkLayout,
    SearchGrid,
    Scenario,
    validate_config,
    default_layout,
    default_grid,
    preset_config,
)
from .socp import ConeProgram, ConeSolution, solve, lift_quadratic_bound
from .harness import ExperimentSpec, ResultRow, run_realization, run_experiment, emit_csv

__all__ = [
    "SimulationConfig",
    "NetworkLayout",
    "SearchGrid",
    "Scenario",
    "validate_config",
    "default_layout",
    "default_grid",
    "preset_config",
    "ConeProgram",
    "ConeSolution",
    "solve",
    "lift_quadratic_bound",
    "ExperimentSpec",
    "ResultRow",
    "run_realization",
    "run_experiment",
    "emit_csv",
]

__version__ = "0.1.0"
