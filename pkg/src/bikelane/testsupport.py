"""Exhaustive oracles for small instances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .model import PlanningInstance, budget_tolerance
from .utility import plan_utility

PLAN_LIMIT = 20
CHOICE_LIMIT = 14


@dataclass
class OracleResult:
    value: float
    plans: list[frozenset]
    enumerated: int


def _enumerate(instance: PlanningInstance, limit: int, score, atol: float = 1e-9) -> OracleResult:
    ids = instance.network.ids
    if len(ids) > limit:
        raise ValueError(f"oracle refuses {len(ids)} segments (limit {limit})")
    costs = [instance.network.cost(s) for s in ids]
    cap = instance.budget + budget_tolerance(instance.budget)
    best, plans, count = -math.inf, [], 0
    for bits in product((0, 1), repeat=len(ids)):
        count += 1
        if math.fsum(c for c, b in zip(costs, bits) if b) > cap:
            continue
        sel = frozenset(s for s, b in zip(ids, bits) if b)
        v = score(sel)
        if v > best + atol:
            best, plans = v, [sel]
        elif v >= best - atol:
            plans.append(sel)
    return OracleResult(best, plans, count)


def brute_force_plan(instance: PlanningInstance) -> OracleResult:
    return _enumerate(instance, PLAN_LIMIT, lambda sel: plan_utility(instance, sel))


def brute_force_choice(instance: PlanningInstance, ctx) -> OracleResult:
    from .choice import eval_choice_objective

    return _enumerate(instance, CHOICE_LIMIT, lambda sel: eval_choice_objective(instance, ctx, sel))
