"""Dial-a-ride scheduling with soft time windows and chance-constrained capacity.

The package solves the flexible, demand-robust dial-a-ride problem exactly by
branch-and-cut-and-price over a trip-based set-partitioning model.  Capacity
risk under bounded-support demand uncertainty is controlled through a
distribution-free exponential tail bound; late service at flexible stops is
allowed against a linear delay penalty.

Main entry points:

* :func:`flexride.instance.parse_instance` / :func:`flexride.instance.apply_mode`
* :func:`flexride.search.solve_bcp`
* :func:`flexride.oracle.solve_exact` (brute force, tiny instances)
* :func:`flexride.simulator.simulate` / :func:`flexride.simulator.hoeffding_audit`
"""

from flexride.instance import Instance, ModeConfig, Node, UncertainLoad, apply_mode, parse_instance
from flexride.robustness import (
    RobustParams,
    gamma_coefficient,
    inflated_onboard_sum,
    is_robust_feasible,
    kappa_psi,
    violation_probability,
)
from flexride.search import SolveConfig, SolveReport, solve_bcp

__all__ = [
    "Instance",
    "ModeConfig",
    "Node",
    "UncertainLoad",
    "apply_mode",
    "parse_instance",
    "RobustParams",
    "gamma_coefficient",
    "inflated_onboard_sum",
    "is_robust_feasible",
    "kappa_psi",
    "violation_probability",
    "SolveConfig",
    "SolveReport",
    "solve_bcp",
]

__version__ = "0.1.0"
