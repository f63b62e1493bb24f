"""Route choice: multinomial logit, its entropy program, and the piecewise-linear surrogate."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from itertools import islice
from typing import Hashable

import networkx as nx
import numpy as np

from .formulations import breakpoints
from .model import IngestError, PlanningInstance, RoadNetwork, UtilitySpec, ValidationError, validate_trajectory, Trajectory
from .optkernel import INF, LinearModel, solve_lp
from .utility import trajectory_utility

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ODGroup:
    key: Hashable
    demand: float
    routes: tuple[tuple, ...]
    vbar: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(tuple(r) for r in self.routes))
        object.__setattr__(self, "vbar", tuple(float(v) for v in self.vbar))
        if not self.routes:
            raise ValidationError(f"OD {self.key!r} has no candidate routes")
        if len(self.vbar) != len(self.routes):
            raise ValidationError(f"OD {self.key!r}: one disutility per route required")
        if not all(math.isfinite(v) for v in self.vbar):
            raise ValidationError(f"OD {self.key!r}: disutilities must be finite")
        if not self.demand > 0:
            raise ValidationError(f"OD {self.key!r}: demand must be > 0")


@dataclass(frozen=True)
class ChoiceContext:
    ods: tuple[ODGroup, ...]
    eta: float = 20.0

    def validate(self, network: RoadNetwork):
        for od in self.ods:
            for k, r in enumerate(od.routes):
                validate_trajectory(network, Trajectory(r), f"{od.key}/{k}")


def route_utilities(instance: PlanningInstance, ctx: ChoiceContext, selected,
                    spec: UtilitySpec | None = None) -> list[np.ndarray]:
    """Per OD, the vector v_x(r) - vbar(r) over its routes."""
    selected = frozenset(selected)
    out = []
    for od in ctx.ods:
        vx = [trajectory_utility(instance, Trajectory(r), selected, spec) for r in od.routes]
        out.append(np.array(vx) - np.array(od.vbar))
    return out


def _softmax(a: np.ndarray) -> np.ndarray:
    z = np.exp(a - a.max())
    return z / z.sum()


def mnl_probabilities(instance: PlanningInstance, ctx: ChoiceContext, selected,
                      spec: UtilitySpec | None = None) -> dict[tuple[int, int], float]:
    probs = {}
    for m, a in enumerate(route_utilities(instance, ctx, selected, spec)):
        for r, p in enumerate(_softmax(a)):
            probs[m, r] = float(p)
    return probs


def ll_objective(instance: PlanningInstance, ctx: ChoiceContext, p: dict, selected,
                 spec: UtilitySpec | None = None) -> float:
    """sum p ln p + p (vbar - v_x), with 0 ln 0 = 0."""
    total = 0.0
    for m, a in enumerate(route_utilities(instance, ctx, selected, spec)):
        for r, ar in enumerate(a):
            pr = p[m, r]
            if pr < 0:
                raise ValueError("probabilities must be nonnegative")
            total += (pr * math.log(pr) if pr > 0 else 0.0) - pr * ar
    return total


def kkt_residual(instance: PlanningInstance, ctx: ChoiceContext, p: dict, selected,
                 spec: UtilitySpec | None = None) -> float:
    """max |ln p + 1 + vbar - v_x - gamma_m| with gamma_m the mean over the OD's routes."""
    worst = 0.0
    for m, a in enumerate(route_utilities(instance, ctx, selected, spec)):
        g = np.array([math.log(p[m, r]) + 1.0 - a[r] for r in range(len(a))])
        worst = max(worst, float(np.max(np.abs(g - g.mean()))))
    return worst


def eval_choice_objective(instance: PlanningInstance, ctx: ChoiceContext, selected,
                          spec: UtilitySpec | None = None) -> float:
    """Demand-weighted expected route utility under exact MNL choice."""
    total = 0.0
    for od, a in zip(ctx.ods, route_utilities(instance, ctx, selected, spec)):
        total += od.demand * float(_softmax(a) @ a)
    return total


def objective_with(instance, ctx, p: dict, selected, spec=None) -> float:
    """Same objective, for given choice probabilities."""
    total = 0.0
    for m, (od, a) in enumerate(zip(ctx.ods, route_utilities(instance, ctx, selected, spec))):
        total += od.demand * sum(p[m, r] * a[r] for r in range(len(a)))
    return total


@dataclass
class LLLinSolution:
    p: dict
    omega: dict
    gamma: dict
    rho: dict
    primal_value: float
    dual_value: float
    breakpoints: list[float]

    @property
    def duality_gap(self) -> float:
        return abs(self.primal_value - self.dual_value)


def ll_lin_solve(instance: PlanningInstance, ctx: ChoiceContext, selected, K: int = 20,
                 p_min: float = 1e-4, spec: UtilitySpec | None = None) -> LLLinSolution:
    """Solve the piecewise-linear lower level as an LP for a fixed plan."""
    pts = breakpoints(K, p_min)
    logs = [math.log(q) + 1.0 for q in pts]
    util = route_utilities(instance, ctx, selected, spec)
    p, gamma, rho = {}, {}, {}
    primal = 0.0
    # ODs share no rows, so each block is its own LP
    for m, a in enumerate(util):
        lp = LinearModel(f"LL-Lin-{m}")
        pv, tan_rows = {}, {}
        for r, ar in enumerate(a):
            # maximize the negated LL-Lin objective
            pv[r] = lp.add_var(f"p_{m}_{r}", 0.0, INF, obj=float(ar))
            w = lp.add_var(f"omega_{m}_{r}", -INF, INF, obj=-1.0)
            for k, (q, lg) in enumerate(zip(pts, logs)):
                tan_rows[r, k] = lp.add_constr({w: 1.0, pv[r]: -lg}, ">=", -q)
        sum_row = lp.add_constr({pv[r]: 1.0 for r in range(len(a))}, "==", 1.0)
        res = solve_lp(lp)
        if not res.optimal:
            raise RuntimeError(f"LL-Lin LP failed: {res.status}")
        p.update({(m, r): float(res.x[j]) for r, j in pv.items()})
        _center_on_face(p, m, a, pts)
        gamma[m] = -float(res.duals[sum_row])
        rho.update({(m, r, k): -float(res.duals[i]) for (r, k), i in tan_rows.items()})
        primal -= res.value
    omega = {key: _envelope(q, pts) for key, q in p.items()}
    dual = sum(gamma.values()) - sum(pts[k] * v for (m, r, k), v in rho.items())
    return LLLinSolution(p, omega, gamma, rho, primal, dual, pts)


def _kinks(pts: list[float]) -> list[float]:
    """Intersections of consecutive tangents of p ln p, padded with 0 and 1."""
    out = [0.0]
    for a, b in zip(pts, pts[1:]):
        out.append((b - a) / (math.log(b) - math.log(a)))
    out.append(1.0)
    return out


def _envelope(q: float, pts: list[float]) -> float:
    return max((math.log(pk) + 1.0) * q - pk for pk in pts)


def _center_on_face(p: dict, m: int, a: np.ndarray, pts: list[float], tol: float = 1e-9):
    """Move one OD's LP vertex to a canonical point of the optimal face.

    LL-Lin is piecewise linear, so routes whose tangent slope minus utility equals the
    common multiplier can slide along their piece.  Every free route is placed at the same
    fraction t of its piece, which gives tied routes equal probabilities.
    """
    kinks = _kinks(pts)
    slopes = [math.log(pk) + 1.0 for pk in pts]
    n = len(a)
    gamma = None
    for r in range(n):
        q = p[m, r]
        for k in range(len(pts)):
            if kinks[k] + tol < q < kinks[k + 1] - tol:
                gamma = slopes[k] - a[r]
                break
        if gamma is not None:
            break
    if gamma is None:
        return
    lo, hi = [], []
    for r in range(n):
        free = [k for k in range(len(pts)) if abs(slopes[k] - a[r] - gamma) <= 1e-9 * max(1.0, abs(gamma))]
        if free and kinks[free[0]] - tol <= p[m, r] <= kinks[free[0] + 1] + tol:
            lo.append(kinks[free[0]])
            hi.append(kinks[free[0] + 1])
        else:
            lo.append(p[m, r])
            hi.append(p[m, r])
    span = sum(h - l for l, h in zip(lo, hi))
    if span <= 0:
        return
    t = min(1.0, max(0.0, (1.0 - sum(lo)) / span))
    for r in range(n):
        p[m, r] = lo[r] + t * (hi[r] - lo[r])


# --- candidate routes ---------------------------------------------------------

def _segment_graph(network: RoadNetwork) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(network.ids)
    for a, b in network.neighbors:
        g.add_edge(a, b, w=(network.length(a) + network.length(b)) / 2.0)
    return g


def route_length_km(network: RoadNetwork, route) -> float:
    return sum(network.length(s) for s in route) / 1000.0


def generate_routes(network: RoadNetwork, od: tuple, k: int, eta: float = 20.0,
                    graph: nx.Graph | None = None) -> tuple[list[tuple], list[float]]:
    """k shortest simple segment paths between two segments, with vbar = eta * km."""
    o, d = od
    for s in (o, d):
        if s not in network:
            raise IngestError(f"OD {od!r}: unknown segment {s!r}")
    g = graph if graph is not None else _segment_graph(network)
    if o == d:
        routes = [(o,)]
    else:
        try:
            gen = nx.shortest_simple_paths(g, o, d, weight="w")
            routes = [tuple(p) for p in islice(gen, k)]
        except nx.NetworkXNoPath:
            raise ValidationError(f"OD {od!r} is disconnected in the segment graph") from None
    if len(routes) < k:
        log.warning("OD %r: only %d of %d requested routes exist", od, len(routes), k)
    return routes, [eta * route_length_km(network, r) for r in routes]


def build_context(instance: PlanningInstance, k: int = 3, eta: float = 20.0,
                  path_size: dict | None = None) -> ChoiceContext:
    """Aggregate trajectories by OD; each OD's set holds its observed routes plus k shortest paths.

    ``path_size`` optionally maps a route tuple to an additive term folded into vbar.
    """
    net = instance.network
    g = _segment_graph(net)
    groups: "OrderedDict[tuple, list[Trajectory]]" = OrderedDict()
    for t in instance.trajectories:
        if t.weight > 0:
            groups.setdefault(t.od_key, []).append(t)
    ods = []
    for key, trajs in groups.items():
        routes = list(dict.fromkeys(t.segments for t in trajs))
        extra, _ = generate_routes(net, key, k, eta, g)
        for r in extra:
            if r not in routes:
                routes.append(r)
        vbar = [eta * route_length_km(net, r) + (path_size or {}).get(r, 0.0) for r in routes]
        od_id = f"{key[0]}>{key[1]}"
        ods.append(ODGroup(od_id, sum(t.weight for t in trajs), tuple(routes), tuple(vbar)))
    return ChoiceContext(tuple(ods), eta)


def induced_instance(instance: PlanningInstance, ctx: ChoiceContext) -> PlanningInstance:
    """Single-route ODs as a fixed-route instance (route = trajectory, weight = demand)."""
    from .model import build_instance

    trajs = []
    for od in ctx.ods:
        if len(od.routes) != 1:
            raise ValidationError("induced instance requires exactly one route per OD")
        trajs.append(Trajectory(od.routes[0], od.demand, str(od.key)))
    return build_instance(instance.network, trajs, instance.budget, instance.utility)


# --- route-set files ------------------------------------------------------------

def parse_routes(path, network: RoadNetwork | None = None, eta: float = 20.0) -> ChoiceContext:
    """Lines ``od_id,demand,route_index,vbar,[seg ...]``; '#' starts a comment."""
    from .ingest import ParseError, parse_segment_list

    groups: "OrderedDict[str, dict]" = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",", 4)
            if len(parts) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 fields")
            od_id, demand, idx, vbar, segs = (p.strip() for p in parts)
            try:
                demand_f, idx_i, vbar_f = float(demand), int(idx), float(vbar)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            route = parse_segment_list(segs, f"{path}:{lineno}")
            g = groups.setdefault(od_id, {"demand": demand_f, "routes": {}})
            if g["demand"] != demand_f:
                raise ParseError(f"{path}:{lineno}: inconsistent demand for OD {od_id}")
            if idx_i in g["routes"]:
                raise ParseError(f"{path}:{lineno}: duplicate route index {idx_i} for OD {od_id}")
            g["routes"][idx_i] = (route, vbar_f)
    ods = []
    for od_id, g in groups.items():
        items = [g["routes"][k] for k in sorted(g["routes"])]
        ods.append(ODGroup(od_id, g["demand"], tuple(r for r, _ in items), tuple(v for _, v in items)))
    ctx = ChoiceContext(tuple(ods), eta)
    if network is not None:
        ctx.validate(network)
    return ctx


def write_routes(ctx: ChoiceContext, path):
    with open(path, "w", encoding="utf-8") as fh:
        for od in ctx.ods:
            for k, (r, v) in enumerate(zip(od.routes, od.vbar)):
                fh.write(f"{od.key},{od.demand!r},{k},{v!r},[{' '.join(str(s) for s in r)}]\n")
