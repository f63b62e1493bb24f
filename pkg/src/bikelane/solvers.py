"""Solution engines over a PlanningInstance: exact MILP, Lagrangian outer approximation, greedy."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formulations import build_blac, build_blgu, build_choice_milp, strong_duality_residual
from .model import AC, ConfigurationError, ConstructionPlan, PlanningInstance, budget_tolerance, evaluate_plan
from .optkernel import INF, FlowNetwork, LinearModel, MilpStatus, max_flow, solve_lp, solve_milp
from .utility import SublistFamily, instance_family, trajectory_utility

log = logging.getLogger(__name__)


class EngineUnsupported(ConfigurationError):
    """The Lagrangian engine needs nonnegative coefficients on every multi-segment term."""


# --- the relaxed (budget-free) problem as a closure ----------------------------

class RelaxedProblem:
    """S(x) as a weighted family of segment sets closed under the nested children.

    Segment nodes are one-element keys; every other key needs its two children.
    """

    def __init__(self, instance: PlanningInstance):
        self.instance = instance
        net = instance.network
        fam = SublistFamily()
        spec = instance.utility
        if isinstance(spec, AC):
            for s in net.ids:
                fam.entries[(s,)] = float(instance.demand[s])
            if spec.lam > 0:
                for (a, b), dab in instance.pair_demand.items():
                    if dab > 0:
                        fam.entries[(a, b)] = spec.lam * dab
                        fam.children[(a, b)] = ((a,), (b,))
        else:
            from .formulations import prune_family

            full = instance_family(instance)
            keep = prune_family(full)
            for s in net.ids:
                fam.entries[(s,)] = full.singleton(s)
            for k in keep:
                fam.entries[k] = full.entries[k]
                fam.children[k] = full.children[k]
        self.family = fam
        self.multi = [k for k in fam.entries if len(k) > 1]
        bad = [k for k in self.multi if fam.entries[k] < -1e-12]
        if bad:
            raise EngineUnsupported(
                f"{len(bad)} continuity coefficients are negative (non-convex f); use the exact MILP")
        self.ids = net.ids
        self.cost = {s: net.cost(s) for s in self.ids}
        self.arcs = []
        for k in self.multi:
            kids = []
            for c in fam.children[k]:
                if c not in kids:
                    kids.append(c)
            for c in kids:
                self.arcs.append((k, c))
        self._members = {k: frozenset(k) for k in self.multi}
        self._touching: dict = {sid: [] for sid in self.ids}
        for k in self.multi:
            for sid in self._members[k]:
                self._touching[sid].append(k)

    def S(self, selected) -> float:
        fam = self.family
        total = math.fsum(fam.entries[(s,)] for s in selected if (s,) in fam.entries)
        return total + math.fsum(fam.entries[k] for k in self.multi if self._members[k] <= selected)

    def c(self, selected) -> float:
        return math.fsum(self.cost[s] for s in selected)

    def gain(self, base, sid) -> float:
        """S(base + sid) - S(base) for sid not in base."""
        g = self.family.entries.get((sid,), 0.0)
        for k in self._touching[sid]:
            if all(m == sid or m in base for m in self._members[k]):
                g += self.family.entries[k]
        return g

    def closure(self, u: float, forced=frozenset(), allowed=None) -> tuple[frozenset, float]:
        """Largest maximizer of S(x) - u c(x) over closed sets with forced <= x <= allowed.

        Keys made entirely of forced segments are contracted away, so the returned
        weight omits their constant share; it is the full closure weight only when
        nothing is forced.
        """
        fam = self.family
        src, snk = ("__src__",), ("__snk__",)
        forced = frozenset(forced)
        dropped = set()
        if allowed is not None:
            for sid in self.ids:
                if sid not in allowed:
                    dropped.add((sid,))
                    dropped.update(self._touching[sid])
        fixed = set()
        if forced:
            for sid in forced:
                fixed.add((sid,))
                for k in self._touching[sid]:
                    if self._members[k] <= forced:
                        fixed.add(k)
        skip = dropped | fixed
        keys = [k for k in fam.entries if k not in skip] if skip else list(fam.entries)
        net = FlowNetwork(src, snk, list(keys))
        positive = 0.0
        for k in keys:
            w = fam.entries[k]
            if len(k) == 1:
                w = w - u * self.cost[k[0]]
            if w > 0:
                net.add_arc(src, k, w)
                positive += w
            elif w < 0:
                net.add_arc(k, snk, -w)
        for a, b in self.arcs:
            if a not in skip and b not in fixed:
                net.add_arc(a, b, INF)
        cut, side = max_flow(net, exact=False)
        chosen = forced | frozenset(k[0] for k in side if len(k) == 1 and k != src and k != snk)
        return chosen, positive - cut

    def lp_relaxation(self, u: float) -> LinearModel:
        """Budget-free relaxation with nested rows; TU, so its basic optima are integral."""
        lp = LinearModel("lagrangian-relaxation")
        col = {}
        for k, w in self.family.entries.items():
            obj = w - u * self.cost[k[0]] if len(k) == 1 else w
            col[k] = lp.add_var("v" + str(len(col)), 0.0, 1.0, obj)
        for a, b in self.arcs:
            lp.add_constr({col[a]: 1.0, col[b]: -1.0}, "<=", 0.0)
        lp.obj_constant = u * self.instance.budget
        self._lp_cols = col
        return lp


def lagrangian_subproblem(instance: PlanningInstance, u: float,
                          relaxed: RelaxedProblem | None = None) -> tuple[frozenset, float]:
    """x(u) and Phi(u) = max_x S(x) - u (c(x) - B), via maximum-weight closure."""
    if u < 0:
        raise ValueError("dual value must be >= 0")
    rp = relaxed if relaxed is not None else RelaxedProblem(instance)
    x, _ = rp.closure(u)
    return x, rp.S(x) - u * (rp.c(x) - instance.budget)


def lagrangian_lp(instance: PlanningInstance, u: float, relaxed: RelaxedProblem | None = None):
    """Same subproblem solved as an LP; returns (x, Phi, integral?)."""
    rp = relaxed if relaxed is not None else RelaxedProblem(instance)
    lp = rp.lp_relaxation(u)
    res = solve_lp(lp)
    if not res.optimal:
        raise RuntimeError(f"relaxation LP failed: {res.status}")
    integral = bool(np.all(np.minimum(np.abs(res.x), np.abs(res.x - 1.0)) <= 1e-7))
    x = frozenset(k[0] for k, j in rp._lp_cols.items() if len(k) == 1 and res.x[j] > 0.5)
    return x, res.value, integral


# --- Lagrangian outer approximation ----------------------------------------------

@dataclass
class DualEval:
    u: float
    phi: float
    selected: frozenset
    S: float
    cost: float
    g: float  # subgradient B - c(x(u))


@dataclass
class DualSearchState:
    u_over: float = 0.0
    u_under: float = 0.0
    u_star: float = 0.0
    records: list[DualEval] = field(default_factory=list)
    best_dual_bound: float = INF
    evaluations: int = 0  # subproblem solves (closure computations)

    def note(self, ev: DualEval):
        self.records.append(ev)
        self.best_dual_bound = min(self.best_dual_bound, ev.phi)


def gu_lag(instance: PlanningInstance, eps: float = 1e-4, milp_time_limit: float | None = None,
           mip_gap: float = 1e-9, widen: bool = True, restricted: str = "closure",
           node_limit: int | None = 200) -> tuple[ConstructionPlan, DualSearchState]:
    """Lagrangian relaxation heuristic with a restricted MILP on the surviving segments.

    ``restricted`` picks how the restricted MILP is solved: "closure" runs branch and
    bound with node LP bounds computed by parametric min-cut (exact, since the nested
    constraint matrix is totally unimodular); "milp" hands the model to the generic
    kernel. Both start from x(u_under) filled greedily within V(u*).
    """
    if not eps > 0:
        raise ConfigurationError("eps must be > 0")
    t0 = time.monotonic()
    rp = RelaxedProblem(instance)
    B = instance.budget
    tol = budget_tolerance(B)
    state = DualSearchState()
    e = frozenset(instance.network.ids)
    S_e, c_e = rp.S(e), rp.c(e)
    prov = {"solver": "gu-lag", "eps": eps}

    def finish(sel, extra):
        plan = evaluate_plan(instance, sel, {**prov, **extra, "evaluations": state.evaluations,
                                             "u_star": state.u_star,
                                             "wall_time": time.monotonic() - t0})
        plan.bound = max(state.best_dual_bound, plan.objective)
        return plan, state

    if c_e <= B + tol:
        state.note(DualEval(0.0, S_e - 0.0, e, S_e, c_e, B - c_e))
        return finish(e, {"exit": "budget-covers-all"})

    def evaluate(u, lo=frozenset(), hi=None):
        # largest maximizers nest in u, so x(u) lies between the bracket ends' selections
        x, _ = rp.closure(u, lo, hi)
        state.evaluations += 1
        S, c = rp.S(x), rp.c(x)
        ev = DualEval(u, S - u * (c - B), x, S, c, B - c)
        state.note(ev)
        return ev

    over = DualEval(0.0, S_e, e, S_e, c_e, B - c_e)
    state.note(over)
    positive = [c for c in rp.cost.values() if c > 0]
    u_hi = S_e / min(positive)
    if len(positive) < len(rp.cost):
        under = evaluate(u_hi)
    else:
        under = DualEval(u_hi, u_hi * B, frozenset(), 0.0, 0.0, B)
        state.note(under)
    state.u_over, state.u_under = over.u, under.u

    cur = None
    while True:
        denom = under.cost - over.cost
        if abs(denom) <= 1e-12:
            cur = under
            exit_reason = "flat-bracket"
            break
        u_star = (under.S - over.S) / denom
        state.u_star = u_star
        cur = evaluate(u_star, under.selected, over.selected)
        if abs(cur.cost - B) <= tol:
            # zero subgradient: Phi(u*) = S(x(u*)), so x(u*) is certified optimal
            exit_reason = "budget-hit"
            break
        approx = under.phi + (u_star - under.u) * under.g
        scale = abs(cur.phi) if abs(cur.phi) > 1e-12 else 1.0
        if abs(cur.phi - approx) / scale <= eps:
            exit_reason = "converged"
            break
        if cur.g < 0:
            over = cur
            state.u_over = u_star
        else:
            under = cur
            state.u_under = u_star
        if state.evaluations >= len(rp.ids) + 1:
            exit_reason = "evaluation-cap"
            log.warning("outer approximation exceeded |V|+1 evaluations")
            break

    if abs(cur.cost - B) <= tol:
        return finish(cur.selected, {"exit": exit_reason, "restricted": 0})
    pool = cur.selected
    if cur.cost < B:
        # x(u*) fits, so it is optimal on its own support; widening may still improve it
        if widen:
            pool = over.selected | cur.selected
        if pool == cur.selected:
            return finish(cur.selected, {"exit": exit_reason, "restricted": len(pool)})
    seed = under.selected if under.cost <= B + tol else frozenset()
    seed = complete_greedily(rp, seed, pool, B)
    extra = {"exit": exit_reason, "restricted": len(pool), "restricted_method": restricted}
    if restricted == "milp":
        model, vmap = build_blgu(instance, rp.family, segments=pool)
        init = vmap.vector_for(model, seed, instance)
        res = solve_milp(model, mip_gap=mip_gap, time_limit=milp_time_limit, node_limit=node_limit,
                         initial=np.array(init))
        best = frozenset(vmap.selected(res.incumbent)) if res.incumbent is not None else seed
        extra.update(milp_status=res.status.value, milp_nodes=res.nodes)
    elif restricted == "closure":
        res = restricted_search(rp, B, pool, seed, mip_gap, node_limit, milp_time_limit)
        best = res.selected
        extra.update(milp_status=res.status.value, milp_nodes=res.nodes)
    else:
        raise ConfigurationError(f"unknown restricted method {restricted!r}")
    return finish(best, extra)


def complete_greedily(rp: RelaxedProblem, base, allowed, B: float) -> frozenset:
    """Fill leftover budget from ``allowed`` by best gain per unit cost."""
    sel = set(base)
    spent = rp.c(sel)
    cap = B + budget_tolerance(B)
    entries = rp.family.entries
    order = {sid: k for k, sid in enumerate(rp.ids)}
    cand = [sid for sid in rp.ids if sid in allowed and sid not in sel]
    # a multi key adds to a candidate's gain once that candidate is its only missing member
    missing = {}
    gain = {sid: entries.get((sid,), 0.0) for sid in cand}
    for sid in cand:
        for k in rp._touching[sid]:
            if k not in missing:
                missing[k] = sum(1 for m in rp._members[k] if m not in sel)
            if missing[k] == 1:
                gain[sid] += entries[k]
    while True:
        best, best_key = None, None
        for sid in cand:
            c = rp.cost[sid]
            if sid in sel or spent + c > cap or gain[sid] <= 1e-12:
                continue
            g = gain[sid]
            key = (g / c if c > 0 else INF, g, -order[sid])
            if best_key is None or key > best_key:
                best, best_key = sid, key
        if best is None:
            return frozenset(sel)
        sel.add(best)
        spent += rp.cost[best]
        for k in rp._touching[best]:
            if k not in missing:
                continue
            missing[k] -= 1
            if missing[k] == 1:
                last = next(m for m in rp._members[k] if m not in sel)
                if last in gain:
                    gain[last] += entries[k]


@dataclass
class RestrictedResult:
    selected: frozenset
    value: float
    bound: float
    status: MilpStatus
    nodes: int


def node_dual(rp: RelaxedProblem, B: float, forced=frozenset(), allowed=None):
    """Exact minimum of the Lagrangian dual with some segments forced in or left out.

    The closure polytope is integral, so this equals the node's LP-relaxation bound.
    Returns (bound, over, under) with x(under) within budget, or None when even the
    forced set overspends.
    """
    tol = budget_tolerance(B)
    if rp.c(forced) > B + tol:
        return None

    def ev(u, lo=forced, hi=allowed):
        x, _ = rp.closure(u, lo, hi)
        S, c = rp.S(x), rp.c(x)
        return DualEval(u, S - u * (c - B), x, S, c, B - c)

    over = ev(0.0)
    if over.cost <= B + tol:
        return over.S, over, over
    free = (allowed if allowed is not None else frozenset(rp.ids)) - forced
    positive = [rp.cost[s] for s in free if rp.cost[s] > 0]
    under = ev((over.S - rp.S(forced)) / min(positive) + 1.0)
    for _ in range(len(free) + 2):
        denom = under.cost - over.cost
        if abs(denom) <= 1e-12:
            break
        u = (under.S - over.S) / denom
        cur = ev(u, under.selected, over.selected)
        if abs(cur.g) <= tol:
            return cur.S, cur, cur
        line = under.phi + (u - under.u) * under.g
        if cur.phi <= line + 1e-10 * max(1.0, abs(line)):
            return line, over, under
        if cur.g < 0:
            over = cur
        else:
            under = cur
    return min(over.phi, under.phi), over, under


def restricted_search(rp: RelaxedProblem, B: float, allowed, seed, mip_gap: float = 1e-9,
                      node_limit: int | None = None, time_limit: float | None = None) -> RestrictedResult:
    """Branch and bound for the budgeted problem on ``allowed``; node bounds come from node_dual."""
    t0 = time.monotonic()
    allowed = frozenset(allowed)
    inc = frozenset(seed)
    inc_val = rp.S(inc)
    order = {sid: k for k, sid in enumerate(rp.ids)}
    heap: list = []
    seq = 0
    nodes = 0

    def consider(forced, allow):
        nonlocal inc, inc_val, seq
        out = node_dual(rp, B, forced, allow)
        if out is None:
            return
        bound, over, under = out
        cand = complete_greedily(rp, under.selected, allow, B)
        val = rp.S(cand)
        if val > inc_val + 1e-12:
            inc, inc_val = cand, val
        if over is under or bound <= inc_val + mip_gap * abs(bound) + 1e-12:
            return
        frac = over.selected - under.selected
        branch = max(frac, key=lambda sid: (rp.cost[sid], -order[sid]))
        heapq.heappush(heap, (-bound, seq, forced, allow, branch))
        seq += 1

    consider(frozenset(), allowed)
    status = MilpStatus.OPTIMAL
    while heap:
        bound = -heap[0][0]
        if bound <= inc_val + mip_gap * abs(bound) + 1e-12:
            heap.clear()
            break
        if (node_limit is not None and nodes >= node_limit) or \
                (time_limit is not None and time.monotonic() - t0 > time_limit):
            status = MilpStatus.INTERRUPTED
            break
        _, _, forced, allow, branch = heapq.heappop(heap)
        nodes += 1
        consider(forced | {branch}, allow)
        consider(forced, allow - {branch})
    open_bound = -heap[0][0] if heap else -INF
    return RestrictedResult(inc, inc_val, max(open_bound, inc_val), status, nodes)


# --- exact and greedy ------------------------------------------------------------------

def solve_exact(instance: PlanningInstance, variant: str | None = None, mip_gap: float = 1e-6,
                time_limit: float | None = None) -> ConstructionPlan:
    t0 = time.monotonic()
    variant = variant or ("ac" if isinstance(instance.utility, AC) else "gu")
    if variant == "ac":
        model, vmap = build_blac(instance)
    elif variant == "gu":
        model, vmap = build_blgu(instance)
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    # a greedy warm start guarantees an incumbent when the time limit stops the search early
    start = greedy(instance).selected
    res = solve_milp(model, mip_gap=mip_gap, time_limit=time_limit,
                     initial=np.array(vmap.vector_for(model, start, instance)))
    prov = {"solver": "exact", "variant": variant, "mip_gap": mip_gap, "status": res.status.value,
            "nodes": res.nodes, "milp_value": res.value}
    if res.incumbent is None:
        plan = evaluate_plan(instance, (), prov)
        plan.feasible = False
        plan.bound = res.bound if math.isfinite(res.bound) else None
        plan.provenance["wall_time"] = time.monotonic() - t0
        return plan
    plan = evaluate_plan(instance, vmap.selected(res.incumbent), prov)
    plan.bound = max(res.bound, plan.objective)
    plan.provenance["wall_time"] = time.monotonic() - t0
    return plan


def greedy(instance: PlanningInstance) -> ConstructionPlan:
    """Add the affordable segment with the best marginal utility per unit cost until none helps."""
    t0 = time.monotonic()
    net = instance.network
    B = instance.budget
    tol = budget_tolerance(B)
    trajs = [t for t in instance.trajectories if t.weight > 0]
    on = {s: [] for s in net.ids}
    for k, t in enumerate(trajs):
        for s in set(t.segments):
            on[s].append(k)
    selected: set = set()
    base = [0.0] * len(trajs)
    spent = 0.0
    gains: dict = {}

    def gain(s):
        g = 0.0
        with_s = selected | {s}
        for k in on[s]:
            t = trajs[k]
            g += t.weight * (trajectory_utility(instance, t, with_s) - base[k])
        return g

    dirty = set(net.ids)
    while True:
        for s in dirty:
            if s not in selected:
                gains[s] = gain(s)
        dirty = set()
        best, best_key = None, None
        for s in net.ids:
            if s in selected:
                continue
            c = net.cost(s)
            if spent + c > B + tol:
                continue
            g = gains[s]
            if g <= 1e-12:
                continue
            ratio = g / c if c > 0 else INF
            key = (ratio, g, -net.index[s])
            if best_key is None or key > best_key:
                best, best_key = s, key
        if best is None:
            break
        selected.add(best)
        spent += net.cost(best)
        gains.pop(best, None)
        for k in on[best]:
            base[k] = trajectory_utility(instance, trajs[k], selected)
            dirty.update(trajs[k].segments)
    plan = evaluate_plan(instance, selected, {"solver": "greedy"})
    plan.provenance["wall_time"] = time.monotonic() - t0
    return plan


# --- route choice ---------------------------------------------------------------------

def solve_choice(instance: PlanningInstance, ctx, K: int = 20, p_min: float = 1e-4,
                 mip_gap: float = 1e-6, time_limit: float | None = None) -> ConstructionPlan:
    """Single-level MILP with LL-Lin optimality rows; the plan's objective is the exact MNL value."""
    from .choice import eval_choice_objective

    t0 = time.monotonic()
    model, vmap = build_choice_milp(instance, ctx, K, p_min)
    res = solve_milp(model, mip_gap=mip_gap, time_limit=time_limit)
    prov = {"solver": "choice-milp", "K": K, "p_min": p_min, "status": res.status.value,
            "nodes": res.nodes, "approx_bound": res.bound}
    if res.incumbent is None:
        plan = evaluate_plan(instance, (), prov)
        plan.feasible = False
        return plan
    sel = vmap.selected(res.incumbent)
    plan = evaluate_plan(instance, sel, prov)
    plan.objective = eval_choice_objective(instance, ctx, sel)
    plan.provenance.update({
        "approx_value": res.value,
        "exact_value": plan.objective,
        "strong_duality_residual": strong_duality_residual(model, res.incumbent),
        "p": {key: float(res.incumbent[j]) for key, j in vmap.index["p"].items()},
        "wall_time": time.monotonic() - t0,
    })
    return plan
