"""Linear programs: model container and a dense bounded revised simplex.

The model is always a maximization.  Internally every row ``a x (<=|=|>=) b`` gets
a logical variable ``s = a x`` whose bounds encode the relation, so the working
form is ``[A  -I] z = 0`` with ``l <= z <= u``.  Phase 1 minimizes the sum of
bound violations of the basic variables; phase 2 the (negated) objective.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

INF = math.inf

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 100


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    obj: float = 0.0


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str  # "<=", "==", ">="
    rhs: float
    name: str = ""


class LinearModel:
    """max c x  subject to sparse rows and variable bounds."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.obj_constant = 0.0

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_rows(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, obj: float = 0.0) -> int:
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables.append(Variable(name, float(lb), float(ub), float(obj)))
        return len(self.variables) - 1

    def add_constr(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in ("<=", "==", ">="):
            raise ValueError(f"bad sense {sense!r}")
        n = len(self.variables)
        clean = {}
        for j, a in coeffs.items():
            if not 0 <= j < n:
                raise ValueError(f"row {name!r} references missing variable {j}")
            if a != 0:
                clean[j] = clean.get(j, 0.0) + float(a)
        self.constraints.append(Constraint(clean, sense, float(rhs), name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def objective_value(self, x) -> float:
        return self.obj_constant + math.fsum(v.obj * x[j] for j, v in enumerate(self.variables))

    def row_activity(self, i: int, x) -> float:
        return math.fsum(a * x[j] for j, a in self.constraints[i].coeffs.items())

    def max_violation(self, x) -> float:
        worst = 0.0
        for j, v in enumerate(self.variables):
            worst = max(worst, v.lb - x[j], x[j] - v.ub)
        for i, c in enumerate(self.constraints):
            act = self.row_activity(i, x)
            if c.sense == "<=":
                worst = max(worst, act - c.rhs)
            elif c.sense == ">=":
                worst = max(worst, c.rhs - act)
            else:
                worst = max(worst, abs(act - c.rhs))
        return worst


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    TIME_LIMIT = "time_limit"


@dataclass
class LpResult:
    status: LpStatus
    value: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # d(value)/d(rhs) per row
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    basis: "Basis | None" = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


# nonbasic positions
AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3


@dataclass
class Basis:
    head: np.ndarray  # basic variable per row
    state: np.ndarray  # AT_LOWER / AT_UPPER / AT_ZERO / BASIC per variable

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.state.copy())


@dataclass
class StandardForm:
    """Dense working form of a LinearModel."""

    A: np.ndarray  # m x n structural matrix
    cost: np.ndarray  # minimization costs over n + m variables
    lower: np.ndarray
    upper: np.ndarray
    n: int
    m: int
    names: list[str] = field(default_factory=list)

    @classmethod
    def from_model(cls, model: LinearModel) -> "StandardForm":
        n, m = model.num_vars, model.num_rows
        A = np.zeros((m, n))
        lower = np.empty(n + m)
        upper = np.empty(n + m)
        cost = np.zeros(n + m)
        for j, v in enumerate(model.variables):
            lower[j], upper[j], cost[j] = v.lb, v.ub, -v.obj
        for i, c in enumerate(model.constraints):
            for j, a in c.coeffs.items():
                A[i, j] = a
            if c.sense == "<=":
                lower[n + i], upper[n + i] = -INF, c.rhs
            elif c.sense == ">=":
                lower[n + i], upper[n + i] = c.rhs, INF
            else:
                lower[n + i] = upper[n + i] = c.rhs
        return cls(A, cost, lower, upper, n, m, [v.name for v in model.variables])

    def column(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.A[:, j]
        col = np.zeros(self.m)
        col[j - self.n] = -1.0
        return col

    def slack_basis(self) -> Basis:
        state = np.empty(self.n + self.m, dtype=np.int8)
        for j in range(self.n):
            state[j] = _rest_state(self.lower[j], self.upper[j])
        state[self.n:] = BASIC
        return Basis(np.arange(self.n, self.n + self.m), state)


def _rest_state(lo: float, up: float) -> int:
    if lo > -INF:
        return AT_LOWER
    if up < INF:
        return AT_UPPER
    return AT_ZERO


class SimplexFailure(RuntimeError):
    pass


class BoundedSimplex:
    """Primal bounded simplex over a StandardForm with explicit dense basis inverse."""

    def __init__(self, sf: StandardForm, lower=None, upper=None, basis: Basis | None = None,
                 max_iter: int | None = None, deadline: float | None = None):
        self.sf = sf
        self.lower = sf.lower.copy() if lower is None else np.asarray(lower, float).copy()
        self.upper = sf.upper.copy() if upper is None else np.asarray(upper, float).copy()
        self.N = sf.n + sf.m
        self.max_iter = max_iter if max_iter is not None else 50 * (self.N + sf.m) + 1000
        self.deadline = deadline
        self.iterations = 0
        if basis is None or not self._load(basis):
            self._load(sf.slack_basis())

    # -- basis handling ---------------------------------------------------
    def _load(self, basis: Basis) -> bool:
        head = basis.head.copy()
        state = basis.state.copy()
        # nonbasic variables must rest on a finite bound when one exists
        for j in np.flatnonzero(state != BASIC):
            lo, up = self.lower[j], self.upper[j]
            s = state[j]
            if s == AT_LOWER and lo == -INF or s == AT_UPPER and up == INF or s == AT_ZERO and (lo > -INF or up < INF):
                state[j] = _rest_state(lo, up)
        self.head = head
        self.state = state
        if not self._refactor():
            return False
        return True

    def _refactor(self) -> bool:
        sf = self.sf
        B = np.empty((sf.m, sf.m))
        for i, j in enumerate(self.head):
            B[:, i] = sf.column(j)
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(self.Binv)):
            return False
        self._compute_primal()
        return True

    def _nonbasic_values(self) -> np.ndarray:
        vals = np.zeros(self.N)
        st = self.state
        lo = st == AT_LOWER
        up = st == AT_UPPER
        vals[lo] = self.lower[lo]
        vals[up] = self.upper[up]
        return vals

    def _compute_primal(self):
        sf = self.sf
        vals = self._nonbasic_values()
        nb = self.state != BASIC
        vals[~nb] = 0.0
        rhs = -(sf.A @ vals[: sf.n]) + vals[sf.n:]
        self.xB = self.Binv @ rhs
        self.values = vals

    def full_solution(self) -> np.ndarray:
        x = self.values.copy()
        x[self.head] = self.xB
        return x

    # -- main loop ----------------------------------------------------------
    def solve(self) -> LpStatus:
        sf = self.sf
        streak = 0
        since_refactor = 0
        phase_was = None
        while True:
            if self.iterations >= self.max_iter:
                return LpStatus.ITERATION_LIMIT
            if self.deadline is not None and (self.iterations & 31) == 0 and time.monotonic() > self.deadline:
                return LpStatus.TIME_LIMIT
            lo_b = self.lower[self.head]
            up_b = self.upper[self.head]
            tol_b = FEAS_TOL * (1.0 + np.abs(self.xB))
            below = self.xB < lo_b - tol_b
            above = self.xB > up_b + tol_b
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                cN_full = None
            else:
                cB = sf.cost[self.head]
                cN_full = sf.cost
            if phase_was is not None and phase_was != phase1:
                streak = 0
            phase_was = phase1

            y = cB @ self.Binv
            d = np.empty(self.N)
            d[: sf.n] = -(y @ sf.A)
            d[sf.n:] = y
            if cN_full is not None:
                d += cN_full
            st = self.state
            d[st == BASIC] = 0.0
            fixed = self.lower == self.upper
            scale = OPT_TOL * (1.0 + np.abs(cN_full) if cN_full is not None else 1.0)
            inc = ((st == AT_LOWER) | (st == AT_ZERO)) & (d < -scale) & ~fixed
            dec = ((st == AT_UPPER) | (st == AT_ZERO)) & (d > scale) & ~fixed
            cand = np.flatnonzero(inc | dec)
            if cand.size == 0:
                if phase1:
                    return LpStatus.INFEASIBLE
                self._y = y
                self._d = d
                return LpStatus.OPTIMAL
            if streak >= DEGENERATE_STREAK:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if inc[q] else -1.0

            alpha = self.Binv @ sf.column(q)
            # x_B(t) = x_B - direction * t * alpha
            delta = direction * alpha
            t_max = INF
            leave = -1
            leave_to = AT_LOWER
            best_piv = 0.0
            move_down = delta > PIVOT_TOL
            move_up = delta < -PIVOT_TOL
            for i in np.flatnonzero(move_down | move_up):
                xi = self.xB[i]
                lo, up = lo_b[i], up_b[i]
                if move_down[i]:
                    if above[i]:
                        target, where = up, AT_UPPER
                    elif below[i]:
                        continue
                    else:
                        if lo == -INF:
                            continue
                        target, where = lo, AT_LOWER
                    t = (xi - target) / delta[i]
                else:
                    if below[i]:
                        target, where = lo, AT_LOWER
                    elif above[i]:
                        continue
                    else:
                        if up == INF:
                            continue
                        target, where = up, AT_UPPER
                    t = (xi - target) / delta[i]
                t = max(t, 0.0)
                piv = abs(delta[i])
                if t < t_max - 1e-12 or (abs(t - t_max) <= 1e-12 and (
                        (streak >= DEGENERATE_STREAK and self.head[i] < self.head[leave]) or
                        (streak < DEGENERATE_STREAK and piv > best_piv))):
                    t_max, leave, leave_to, best_piv = t, i, where, piv
            span = self.upper[q] - self.lower[q]
            if span < t_max:
                # entering variable reaches its own opposite bound first
                self.xB -= span * delta
                self.state[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.values[q] = self.upper[q] if direction > 0 else self.lower[q]
                self.iterations += 1
                streak = 0 if span > 1e-12 else streak + 1
                continue
            if leave < 0:
                if phase1:
                    raise SimplexFailure("phase 1 ray")
                return LpStatus.UNBOUNDED

            # pivot: q enters at row `leave`
            t = t_max
            enter_val = self.values[q] + direction * t if st[q] != AT_ZERO else direction * t
            self.xB -= t * delta
            out = int(self.head[leave])
            self.state[out] = leave_to
            self.values[out] = self.lower[out] if leave_to == AT_LOWER else self.upper[out]
            self.head[leave] = q
            self.state[q] = BASIC
            self.values[q] = 0.0
            self.xB[leave] = enter_val
            piv = alpha[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[leave] = row
            self.iterations += 1
            since_refactor += 1
            streak = streak + 1 if t <= 1e-12 else 0
            if since_refactor >= REFACTOR_EVERY:
                since_refactor = 0
                if not self._refactor():
                    raise SimplexFailure("singular basis at refactorization")

    def basis(self) -> Basis:
        return Basis(self.head.copy(), self.state.copy())


def solve_standard(sf: StandardForm, lower=None, upper=None, basis: Basis | None = None,
                   max_iter: int | None = None, deadline: float | None = None,
                   obj_constant: float = 0.0) -> LpResult:
    simplex = BoundedSimplex(sf, lower, upper, basis, max_iter, deadline)
    try:
        status = simplex.solve()
    except SimplexFailure:
        # numerical trouble: restart cold from the slack basis once
        simplex = BoundedSimplex(sf, lower, upper, None, max_iter, deadline)
        status = simplex.solve()
    if status is not LpStatus.OPTIMAL:
        return LpResult(status, iterations=simplex.iterations,
                        basis=simplex.basis() if status is LpStatus.INFEASIBLE else None)
    z = simplex.full_solution()
    x = z[: sf.n]
    value = obj_constant - float(sf.cost[: sf.n] @ x)
    duals = -simplex._y
    reduced = -simplex._d[: sf.n]
    return LpResult(status, value, x, duals, reduced, simplex.iterations, simplex.basis())


def solve_lp(model: LinearModel, max_iter: int | None = None, time_limit: float | None = None) -> LpResult:
    """Solve the LP; returns primal values, row duals and a basis (for warm starts)."""
    sf = StandardForm.from_model(model)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    return solve_standard(sf, max_iter=max_iter, deadline=deadline, obj_constant=model.obj_constant)


def _fmt(x: float) -> str:
    if x == INF:
        return "+inf"
    if x == -INF:
        return "-inf"
    return repr(float(x))


def write_lp(model: LinearModel, integers=()) -> str:
    """CPLEX-LP text of the model; numbers use repr() so round trips are exact."""
    names = [v.name for v in model.variables]

    def terms(coeffs):
        parts = []
        for j in sorted(coeffs):
            a = coeffs[j]
            sign = "-" if a < 0 else "+"
            parts.append(f"{sign} {_fmt(abs(a))} {names[j]}")
        return " ".join(parts) if parts else "0 " + (names[0] if names else "")

    lines = [f"\\ {model.name}", "Maximize", " obj: " + terms({j: v.obj for j, v in enumerate(model.variables) if v.obj})]
    lines.append("Subject To")
    for c in model.constraints:
        op = {"<=": "<=", ">=": ">=", "==": "="}[c.sense]
        lines.append(f" {c.name}: {terms(c.coeffs)} {op} {_fmt(c.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.lb == -INF and v.ub == INF:
            lines.append(f" {v.name} free")
        else:
            lines.append(f" {_fmt(v.lb)} <= {v.name} <= {_fmt(v.ub)}")
    ints = sorted(integers)
    if ints:
        lines.append("General")
        lines.append(" " + " ".join(names[j] for j in ints))
    lines.append("End")
    return "\n".join(lines) + "\n"
