"""LP-based branch and bound.

Node order: a depth-first dive from the root until the first prune, then
best-bound.  Branching picks the most fractional integer variable, ties broken
by larger |objective coefficient| and then lower index.  Children re-solve from
the parent's optimal basis.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .lp import INF, Basis, LinearModel, LpStatus, StandardForm, solve_standard

INT_TOL = 1e-6


class IntegerModel(LinearModel):
    def __init__(self, name: str = "model"):
        super().__init__(name)
        self.integers: set[int] = set()

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, obj: float = 0.0,
                integer: bool = False) -> int:
        j = super().add_var(name, lb, ub, obj)
        if integer:
            if (lb > -INF and lb != math.floor(lb)) or (ub < INF and ub != math.floor(ub)):
                raise ValueError(f"integer variable {name} needs integral bounds")
            self.integers.add(j)
        return j

    def add_binary(self, name: str, obj: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, obj, integer=True)


class MilpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    INTERRUPTED = "interrupted"


@dataclass
class MilpResult:
    status: MilpStatus
    incumbent: np.ndarray | None
    value: float
    bound: float
    nodes: int = 0
    branches: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0

    @property
    def gap(self) -> float:
        if self.incumbent is None:
            return INF
        return (self.bound - self.value) / max(abs(self.bound), 1e-10)


@dataclass(order=True)
class _Node:
    priority: float
    seq: int
    lower: np.ndarray = None
    upper: np.ndarray = None
    basis: Basis = None
    depth: int = 0


def _pick_branch(x, integers, obj):
    best = None
    for j in integers:
        frac = x[j] - math.floor(x[j])
        if frac <= INT_TOL or frac >= 1 - INT_TOL:
            continue
        key = (-min(frac, 1 - frac), -abs(obj[j]), j)
        if best is None or key < best[0]:
            best = (key, j)
    return None if best is None else best[1]


def solve_milp(model: IntegerModel, mip_gap: float = 1e-6, time_limit: float | None = None,
               initial: np.ndarray | None = None, node_limit: int | None = None) -> MilpResult:
    """Maximize the model; ``initial`` optionally seeds the incumbent (must be feasible)."""
    t0 = time.monotonic()
    deadline = None if time_limit is None else t0 + time_limit
    sf = StandardForm.from_model(model)
    integers = sorted(model.integers)
    obj = np.array([v.obj for v in model.variables])
    const = model.obj_constant

    inc_x, inc_val = None, -INF
    if initial is not None:
        xi = np.asarray(initial, float)
        if model.max_violation(xi) <= 1e-7 and all(abs(xi[j] - round(xi[j])) <= INT_TOL for j in integers):
            inc_x, inc_val = xi.copy(), model.objective_value(xi)

    counter = itertools.count()
    nodes = branches = lp_iters = 0
    root = _Node(-INF, next(counter), sf.lower.copy(), sf.upper.copy(), None, 0)
    stack = [root]  # dive phase
    heap: list[_Node] = []  # best-bound phase, priority = -parent bound
    diving = True
    interrupted = False
    unbounded = False

    def open_bound():
        b = -heap[0].priority if heap else -INF
        for nd in stack:
            b = max(b, -nd.priority)
        return b

    while stack or heap:
        if inc_x is not None:
            gb = max(open_bound(), inc_val)
            if math.isfinite(gb) and (gb - inc_val) <= mip_gap * max(abs(gb), 1e-10):
                break
        if deadline is not None and time.monotonic() > deadline:
            interrupted = True
            break
        if node_limit is not None and nodes >= node_limit:
            interrupted = True
            break
        if diving and stack:
            node = stack.pop()
        else:
            diving = False
            for nd in stack:
                heapq.heappush(heap, nd)
            stack = []
            node = heapq.heappop(heap)
        parent_bound = -node.priority
        if inc_x is not None and parent_bound <= inc_val + _abs_tol(inc_val):
            continue
        remaining = None if deadline is None else max(deadline - time.monotonic(), 0.0)
        res = solve_standard(sf, node.lower, node.upper, node.basis,
                             deadline=None if remaining is None else time.monotonic() + remaining,
                             obj_constant=const)
        nodes += 1
        lp_iters += res.iterations
        if res.status is LpStatus.TIME_LIMIT:
            # put it back so its bound still counts
            heapq.heappush(heap, node)
            interrupted = True
            break
        if res.status is LpStatus.INFEASIBLE:
            if diving:
                diving = False
            continue
        if res.status is LpStatus.UNBOUNDED:
            unbounded = True
            break
        if res.status is not LpStatus.OPTIMAL:
            heapq.heappush(heap, node)
            interrupted = True
            break
        val = res.value
        if inc_x is not None and val <= inc_val + _abs_tol(inc_val):
            if diving:
                diving = False
            continue
        x = res.x
        j = _pick_branch(x, integers, obj)
        if j is None:
            xr = x.copy()
            for k in integers:
                xr[k] = round(xr[k])
            inc_x, inc_val = xr, model.objective_value(xr)
            if diving:
                diving = False
            continue
        branches += 1
        fl = math.floor(x[j])
        down_u = node.upper.copy()
        down_u[j] = fl
        up_l = node.lower.copy()
        up_l[j] = fl + 1
        down = _Node(-val, next(counter), node.lower, down_u, res.basis, node.depth + 1)
        up = _Node(-val, next(counter), up_l, node.upper, res.basis, node.depth + 1)
        if diving:
            # explore the side nearer to the LP value first
            if x[j] - fl >= 0.5:
                stack.extend([down, up])
            else:
                stack.extend([up, down])
        else:
            heapq.heappush(heap, down)
            heapq.heappush(heap, up)

    wall = time.monotonic() - t0
    if unbounded:
        return MilpResult(MilpStatus.UNBOUNDED, None, INF, INF, nodes, branches, lp_iters, wall)
    bound = open_bound()
    if inc_x is None:
        if interrupted:
            return MilpResult(MilpStatus.INTERRUPTED, None, -INF, bound, nodes, branches, lp_iters, wall)
        return MilpResult(MilpStatus.INFEASIBLE, None, -INF, -INF, nodes, branches, lp_iters, wall)
    bound = max(bound, inc_val)
    status = MilpStatus.INTERRUPTED if interrupted else MilpStatus.OPTIMAL
    return MilpResult(status, inc_x, inc_val, bound, nodes, branches, lp_iters, wall)


def _abs_tol(inc_val: float) -> float:
    return 1e-9 * (1.0 + abs(inc_val))
