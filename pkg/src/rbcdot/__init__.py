"""Exact discrete optimal transport by random block coordinate descent."""
from .baselines import closed_form_1d, round_to_feasible, sinkhorn_logdomain
from .core import (CostMatrix, OTInstance, Trajectory, TransportPlan, estimate_vhat,
                   feasibility_error, initial_plan_northwest, initial_plan_product, objective)
from .nullspace import (ElementaryMatrix, conformal_realization, find_elementary_conformal,
                        rate_bound_log)
from .rbcd import InexactSchedule, RunConfig, run, run_arbcd, run_with_rounding, step
from .subsolver import solve_full, solve_transportation
from .working_set import SelectorConfig, WorkingSet

__version__ = "0.1.0"

__all__ = [
    "CostMatrix", "ElementaryMatrix", "InexactSchedule", "OTInstance", "RunConfig",
    "SelectorConfig", "Trajectory", "TransportPlan", "WorkingSet", "closed_form_1d",
    "conformal_realization", "estimate_vhat", "feasibility_error", "find_elementary_conformal",
    "initial_plan_northwest", "initial_plan_product", "objective", "rate_bound_log",
    "round_to_feasible", "run", "run_arbcd", "run_with_rounding", "sinkhorn_logdomain",
    "solve_full", "solve_transportation", "step",
]
