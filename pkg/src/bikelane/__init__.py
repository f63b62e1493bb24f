"""Budgeted bike-lane planning from ridden trajectories."""

from .model import (
    AC, GU, ConfigurationError, ConstructionPlan, IngestError, Linear, PlanningInstance, PowerAlpha, RoadNetwork,
    RoadSegment, Table, Trajectory, ValidationError, build_instance, evaluate_plan, optimality_gap,
)
from .solvers import greedy, gu_lag, solve_choice, solve_exact
from .utility import plan_utility

__all__ = [
    "AC", "GU", "ConfigurationError", "ConstructionPlan", "IngestError", "Linear", "PlanningInstance",
    "PowerAlpha", "RoadNetwork", "RoadSegment", "Table", "Trajectory", "ValidationError", "build_instance",
    "evaluate_plan", "greedy", "gu_lag", "optimality_gap", "plan_utility", "solve_choice", "solve_exact",
]
