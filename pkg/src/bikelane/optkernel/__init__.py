"""Solver-agnostic optimization kernel: simplex LP, branch-and-bound MILP, max-flow."""

from .flow import FlowNetwork, cut_capacity, max_flow, solve_closure
from .lp import INF, LinearModel, LpResult, LpStatus, solve_lp, write_lp
from .milp import IntegerModel, MilpResult, MilpStatus, solve_milp

__all__ = [
    "INF", "FlowNetwork", "IntegerModel", "LinearModel", "LpResult", "LpStatus", "MilpResult",
    "MilpStatus", "cut_capacity", "max_flow", "solve_closure", "solve_lp", "solve_milp", "write_lp",
]
