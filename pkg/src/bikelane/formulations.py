"""MILP builders: adjacency-continuity, general run utility, and the route-choice model."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import TYPE_CHECKING, Iterable

from .model import AC, ConfigurationError, IngestError, PlanningInstance
from .optkernel import INF, IntegerModel
from .utility import SublistFamily, canonical_key, instance_family, route_betas

if TYPE_CHECKING:
    from .choice import ChoiceContext


class VariableMap:
    """Two-way map between model columns and domain objects, grouped by class."""

    def __init__(self):
        self.index: dict[str, dict] = defaultdict(dict)
        self.owner: list[tuple[str, object]] = []

    def add(self, model: IntegerModel, cls: str, key, name: str, **kw) -> int:
        if key in self.index[cls]:
            raise KeyError(f"duplicate {cls} variable for {key!r}")
        j = model.add_var(name, **kw)
        self.index[cls][key] = j
        self.owner.append((cls, key))
        return j

    def __getitem__(self, item: tuple[str, object]) -> int:
        cls, key = item
        return self.index[cls][key]

    def get(self, cls: str, key, default=None):
        return self.index.get(cls, {}).get(key, default)

    def count(self, cls: str) -> int:
        return len(self.index.get(cls, {}))

    def selected(self, x, cls: str = "x", tol: float = 0.5) -> set:
        return {key for key, j in self.index.get(cls, {}).items() if x[j] > tol}

    def vector_for(self, model: IntegerModel, selected: set, instance: PlanningInstance) -> list[float]:
        """Column values for a binary plan, with linearization variables set to their products."""
        vals = [0.0] * model.num_vars
        for cls, mapping in self.index.items():
            for key, j in mapping.items():
                if cls == "x":
                    vals[j] = 1.0 if key in selected else 0.0
                elif cls in ("y", "y_pair"):
                    vals[j] = 1.0 if all(s in selected for s in key) else 0.0
        return vals


def _name(prefix: str, key) -> str:
    if isinstance(key, tuple):
        return prefix + "_" + "_".join(str(k) for k in key)
    return f"{prefix}_{key}"


def _add_segment_vars(model, vmap, instance, obj_of):
    for seg in instance.network.segments:
        vmap.add(model, "x", seg.id, _name("x", seg.id), lb=0.0, ub=1.0, obj=obj_of(seg.id), integer=True)


def _add_budget(model, vmap, instance):
    model.add_constr({vmap["x", s.id]: s.cost for s in instance.network.segments if s.cost},
                     "<=", instance.budget, "budget")


def build_blac(instance: PlanningInstance) -> tuple[IntegerModel, VariableMap]:
    u = instance.utility
    if not isinstance(u, AC):
        raise ConfigurationError("build_blac needs an AC utility")
    model = IntegerModel("BL-AC")
    vmap = VariableMap()
    _add_segment_vars(model, vmap, instance, lambda s: instance.demand[s])
    if u.lam > 0:
        for (a, b), dab in instance.pair_demand.items():
            if dab <= 0:
                continue
            j = vmap.add(model, "y_pair", (a, b), _name("y", (a, b)), lb=0.0, ub=1.0, obj=u.lam * dab)
            model.add_constr({j: 1, vmap["x", a]: -1}, "<=", 0)
            model.add_constr({j: 1, vmap["x", b]: -1}, "<=", 0)
    _add_budget(model, vmap, instance)
    return model, vmap


def prune_family(fam: SublistFamily, keep: Iterable[tuple] | None = None) -> list[tuple]:
    """Multi-segment keys worth a variable: nonzero coefficient, or nested under one that is kept."""
    multi = sorted(fam.multi(), key=len, reverse=True)
    need = set(keep or ())
    out = []
    for k in multi:
        if k in need or fam.entries[k] != 0.0:
            out.append(k)
            for c in fam.children[k]:
                if len(c) > 1:
                    need.add(c)
    out.sort(key=lambda k: (len(k), fam_order(fam, k)))
    return out


def fam_order(fam, key):
    return tuple(str(s) for s in key)


def _add_sublist_structure(model, vmap, fam, keys, lower_rows_for):
    """y variables with the nested rows y_l <= y_{l-}, y_l <= y_{l^-}."""

    def col(k):
        return vmap["x", k[0]] if len(k) == 1 else vmap["y", k]

    for k in keys:
        vmap.add(model, "y", k, _name("y", k), lb=0.0, ub=1.0, obj=fam.entries.get(k, 0.0))
    for k in keys:
        j = vmap["y", k]
        kids = []
        for c in fam.children[k]:
            if c not in kids:
                kids.append(c)
        for c in kids:
            model.add_constr({j: 1, col(c): -1}, "<=", 0)
        if k in lower_rows_for:
            ids = list(dict.fromkeys(k))
            coeffs = {j: 1.0}
            for s in ids:
                coeffs[vmap["x", s]] = coeffs.get(vmap["x", s], 0.0) - 1.0
            model.add_constr(coeffs, ">=", -(len(ids) - 1))


def build_blgu(instance: PlanningInstance, family: SublistFamily | None = None,
               segments: Iterable | None = None) -> tuple[IntegerModel, VariableMap]:
    """BL-GU-MILP with the nested reduction.

    ``segments`` restricts the model to a subset of V (sublists touching removed
    segments are dropped); used by the Lagrangian heuristic's final step.
    """
    spec = instance.utility
    if isinstance(spec, AC):
        spec = spec.as_gu()
    fam = family if family is not None else instance_family(instance, spec)
    allowed = None if segments is None else set(segments)
    if allowed is not None:
        sub = SublistFamily()
        for k, b in fam.entries.items():
            if all(s in allowed for s in k):
                sub.entries[k] = b
                if len(k) > 1:
                    sub.children[k] = fam.children[k]
        fam = sub
    model = IntegerModel("BL-GU")
    vmap = VariableMap()
    for seg in instance.network.segments:
        if allowed is None or seg.id in allowed:
            vmap.add(model, "x", seg.id, _name("x", seg.id), lb=0.0, ub=1.0, obj=fam.singleton(seg.id), integer=True)
    keys = prune_family(fam)
    negative = {k for k in keys if fam.entries.get(k, 0.0) < 0}
    _add_sublist_structure(model, vmap, fam, keys, negative)
    model.add_constr({vmap["x", s.id]: s.cost for s in instance.network.segments
                      if s.cost and (allowed is None or s.id in allowed)}, "<=", instance.budget, "budget")
    return model, vmap


def breakpoints(K: int, p_min: float) -> list[float]:
    """K probabilities from p_min to 1 whose logarithms are equally spaced."""
    if K < 2:
        raise ConfigurationError("K must be >= 2")
    if not 0 < p_min < 1:
        raise ConfigurationError("p_min must lie in (0, 1)")
    return [p_min ** ((K - k) / (K - 1)) for k in range(1, K + 1)]


def route_coefficients(instance: PlanningInstance, route, spec=None) -> dict[tuple, float]:
    """v_x(route) = sum over canonical keys of coefficient * prod x."""
    betas = route_betas(instance, route, spec)
    out: dict[tuple, float] = {}
    ids = tuple(route)
    for (a, b), beta in betas.items():
        k = canonical_key(ids[a:b])
        out[k] = out.get(k, 0.0) + beta
    return {k: v for k, v in out.items() if v != 0.0}


def build_choice_milp(instance: PlanningInstance, ctx: "ChoiceContext", K: int = 20,
                      p_min: float = 1e-4) -> tuple[IntegerModel, VariableMap]:
    """Single-level MILP of the planning problem with MNL route choice (LL-Lin optimality rows)."""
    pts = breakpoints(K, p_min)
    net = instance.network
    spec = instance.utility.as_gu() if isinstance(instance.utility, AC) else instance.utility
    for od in ctx.ods:
        for r in od.routes:
            for s in r:
                if s not in net:
                    raise IngestError(f"OD {od.key!r}: route references unknown segment {s!r}")

    coefs = {}
    fam = SublistFamily()
    for m, od in enumerate(ctx.ods):
        for ri, route in enumerate(od.routes):
            c = route_coefficients(instance, route, spec)
            coefs[m, ri] = c
            for k in c:
                _register(fam, k)
    model = IntegerModel("BL-GU-choice")
    vmap = VariableMap()
    for seg in net.segments:
        vmap.add(model, "x", seg.id, _name("x", seg.id), lb=0.0, ub=1.0, integer=True)
    for k in list(fam.entries):
        fam.entries[k] = 1.0  # keep every registered key
    keys = prune_family(fam)
    _add_sublist_structure(model, vmap, fam, keys, set(keys))
    for k in keys:
        model.variables[vmap["y", k]].obj = 0.0

    def col(k):
        return vmap["x", k[0]] if len(k) == 1 else vmap["y", k]

    logs = [math.log(p) + 1.0 for p in pts]
    sd_row: dict[int, float] = {}
    for m, od in enumerate(ctx.ods):
        g = vmap.add(model, "gamma", m, f"gamma_{m}", lb=-INF, ub=INF)
        sd_row[g] = sd_row.get(g, 0.0) - 1.0
        prow = {}
        for ri, route in enumerate(od.routes):
            vbar = od.vbar[ri]
            p = vmap.add(model, "p", (m, ri), f"p_{m}_{ri}", lb=0.0, ub=1.0, obj=-od.demand * vbar)
            w = vmap.add(model, "omega", (m, ri), f"omega_{m}_{ri}", lb=-INF, ub=INF)
            phi = vmap.add(model, "phi", (m, ri), f"phi_{m}_{ri}", lb=-INF, ub=INF, obj=od.demand)
            prow[p] = 1.0
            for k, pk in enumerate(pts):
                model.add_constr({w: 1.0, p: -logs[k]}, ">=", -pk)
            rhos = [vmap.add(model, "rho", (m, ri, k), f"rho_{m}_{ri}_{k}", lb=0.0, ub=INF) for k in range(K)]
            model.add_constr({r: 1.0 for r in rhos}, "==", 1.0)
            dual = {g: 1.0}
            for r, lg in zip(rhos, logs):
                dual[r] = -lg
            for k, c in coefs[m, ri].items():
                j = col(k)
                dual[j] = dual.get(j, 0.0) + c
            model.add_constr(dual, "<=", vbar)
            for r, pk in zip(rhos, pts):
                sd_row[r] = sd_row.get(r, 0.0) + pk
            sd_row[w] = sd_row.get(w, 0.0) + 1.0
            sd_row[p] = sd_row.get(p, 0.0) + vbar
            sd_row[phi] = sd_row.get(phi, 0.0) - 1.0
            phirow = {phi: 1.0}
            for k, c in coefs[m, ri].items():
                z = vmap.add(model, "zeta", (m, ri, k), _name(f"zeta_{m}_{ri}", k), lb=0.0, ub=1.0)
                phirow[z] = -c
                j = col(k)
                model.add_constr({z: 1.0, p: -1.0}, "<=", 0.0)
                model.add_constr({z: 1.0, j: -1.0}, "<=", 0.0)
                model.add_constr({z: 1.0, p: -1.0, j: -1.0}, ">=", -1.0)
            model.add_constr(phirow, "==", 0.0)
        model.add_constr(prow, "==", 1.0)
    model.add_constr(sd_row, "==", 0.0, "strong_duality")
    _add_budget(model, vmap, instance)
    return model, vmap


def _register(fam: SublistFamily, key: tuple):
    if key in fam.entries:
        return
    fam.entries[key] = 0.0
    if len(key) > 1:
        kids = (canonical_key(key[1:]), canonical_key(key[:-1]))
        fam.children[key] = kids
        for c in kids:
            _register(fam, c)


def strong_duality_residual(model: IntegerModel, x) -> float:
    for i, c in enumerate(model.constraints):
        if c.name == "strong_duality":
            return abs(model.row_activity(i, x) - c.rhs)
    raise KeyError("model has no strong-duality row")
