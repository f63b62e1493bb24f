import copy
import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from bikelane.choice import ChoiceContext, ODGroup, eval_choice_objective, ll_lin_solve
from bikelane.formulations import (
    breakpoints, build_blac, build_blgu, build_choice_milp, route_coefficients, strong_duality_residual,
)
from bikelane.model import AC, GU, ConfigurationError, IngestError, Linear, PowerAlpha, Table, Trajectory, build_instance
from bikelane.optkernel import solve_lp, solve_milp
from bikelane.utility import instance_family, plan_utility
from helpers import chain_network, random_convex_utility, random_graph_instance


def _rows(model, sense=None):
    return [c for c in model.constraints if sense is None or c.sense == sense]


def _fix(model, vmap, selected):
    m = copy.deepcopy(model)
    for key, j in vmap.index["x"].items():
        v = 1.0 if key in selected else 0.0
        m.variables[j].lb = m.variables[j].ub = v
    return m


def test_blac_census():
    inst = build_instance(chain_network(2), [Trajectory(("1", "2"))], 2, AC(2.0))
    model, vmap = build_blac(inst)
    assert len(model.integers) == 2 and model.num_vars == 3
    assert model.num_rows == 3
    assert model.variables[vmap["y_pair", ("1", "2")]].obj == 2.0


def test_blac_knapsack_and_zero_pairs():
    inst = build_instance(chain_network(2), [Trajectory(("1", "2"))], 2, AC(0.0))
    model, vmap = build_blac(inst)
    assert vmap.count("y_pair") == 0 and model.num_rows == 1
    inst = build_instance(chain_network(2), [Trajectory(("1",)), Trajectory(("2",))], 2, AC(1.0))
    assert build_blac(inst)[1].count("y_pair") == 0


def test_blac_rejects_gu():
    inst = build_instance(chain_network(2), [Trajectory(("1", "2"))], 2, GU(Linear(1)))
    with pytest.raises(ConfigurationError):
        build_blac(inst)


def test_blgu_nested_rows_for_three_segments():
    inst = build_instance(chain_network(3), [Trajectory(("1", "2", "3"))], 2, GU(PowerAlpha(1.1)))
    model, vmap = build_blgu(inst)
    assert set(vmap.index["x"]) == {"1", "2", "3"}
    assert set(vmap.index["y"]) == {("1", "2"), ("2", "3"), ("1", "2", "3")}
    pairs = {(j, i) for c in _rows(model, "<=") if len(c.coeffs) == 2
             for j, i in [sorted(c.coeffs, key=lambda k: -c.coeffs[k])]}
    y123, y12, y23 = vmap["y", ("1", "2", "3")], vmap["y", ("1", "2")], vmap["y", ("2", "3")]
    assert {(y123, y12), (y123, y23), (y12, vmap["x", "1"]), (y12, vmap["x", "2"])} <= pairs
    assert not _rows(model, ">=")  # all beta >= 0: no lower rows
    assert len(model.integers) == 3


def test_blgu_identical_trajectories_double_beta():
    net = chain_network(3)
    t = Trajectory(("1", "2", "3"))
    one, _ = build_blgu(build_instance(net, [t], 2, GU(PowerAlpha(1.1))))
    two, _ = build_blgu(build_instance(net, [t, t], 2, GU(PowerAlpha(1.1))))
    assert [v.name for v in one.variables] == [v.name for v in two.variables]
    for a, b in zip(one.variables, two.variables):
        assert b.obj == pytest.approx(2 * a.obj)


def test_blgu_nonconvex_lower_rows():
    f = Table((2.0, 3.0, 6.0))
    inst = build_instance(chain_network(3), [Trajectory(("1", "2", "3"))], 2, GU(f))
    fam = instance_family(inst)
    negative = {k for k in fam.multi() if fam.entries[k] < 0}
    assert negative
    model, vmap = build_blgu(inst)
    lower = _rows(model, ">=")
    assert {next(k for k, j in vmap.index["y"].items() if j in c.coeffs and c.coeffs[j] == 1.0) for c in lower} == negative


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_blgu_objective_matches_utility_for_fixed_x(seed):
    rng = random.Random(seed)
    inst = random_graph_instance(rng, rng.randint(3, 7), rng.randint(1, 4), random_convex_utility(rng, True))
    model, vmap = build_blgu(inst)
    ids = inst.network.ids
    sel = {s for s in ids if rng.random() < 0.5}
    if inst.network.total_cost(sel) > inst.budget:
        sel = set()
    res = solve_lp(_fix(model, vmap, sel))
    assert res.optimal
    assert res.value == pytest.approx(plan_utility(inst, sel), abs=1e-7)


def test_blgu_fixed_x_nonconvex():
    inst = build_instance(chain_network(4), [Trajectory(("1", "2", "3", "4"))], 4, GU(Table((2.0, 3.0, 6.0, 6.5))))
    model, vmap = build_blgu(inst)
    for bits in itertools.product((0, 1), repeat=4):
        sel = {str(k + 1) for k, b in enumerate(bits) if b}
        res = solve_lp(_fix(model, vmap, sel))
        assert res.value == pytest.approx(plan_utility(inst, sel), abs=1e-9)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.5, 2.0]))
def test_blac_equals_gu_linear(seed, lam):
    rng = random.Random(seed)
    inst = random_graph_instance(rng, rng.randint(3, 8), rng.randint(1, 5), AC(lam))
    a = solve_milp(build_blac(inst)[0])
    g = solve_milp(build_blgu(inst.with_utility(GU(Linear(lam))))[0])
    assert a.value == pytest.approx(g.value, abs=1e-6)


def test_model_size_bound():
    rng = random.Random(5)
    inst = random_graph_instance(rng, 12, 10, GU(PowerAlpha(1.1)), max_len=6)
    model, vmap = build_blgu(inst)
    n_e = max(len(t) for t in inst.trajectories)
    assert vmap.count("y") <= len(inst.trajectories) * n_e * n_e


def test_breakpoints_examples():
    assert breakpoints(2, 0.01) == pytest.approx([0.01, 1.0])
    assert breakpoints(3, 0.01) == pytest.approx([0.01, 0.1, 1.0])
    pts = breakpoints(7, 1e-4)
    gaps = [math.log(b) - math.log(a) for a, b in zip(pts, pts[1:])]
    assert gaps == pytest.approx([math.log(1e4) / 6] * 6)
    with pytest.raises(ConfigurationError):
        breakpoints(1, 0.1)
    with pytest.raises(ConfigurationError):
        breakpoints(3, 1.0)


def _choice_instance():
    net = chain_network(4)
    inst = build_instance(net, [], 2, GU(PowerAlpha(1.1)))
    ctx = ChoiceContext((ODGroup("a", 3.0, (("1", "2"), ("3", "4")), (1.0, 1.2)),))
    return inst, ctx


def test_choice_census_and_K_doubling():
    inst, ctx = _choice_instance()
    model, vmap = build_choice_milp(inst, ctx, K=3)
    counts = {c: vmap.count(c) for c in ("p", "omega", "gamma", "rho", "phi", "y", "zeta")}
    assert counts["p"] == 2 and counts["omega"] == 2 and counts["gamma"] == 1
    assert counts["rho"] == 6 and counts["phi"] == 2
    n_keys = sum(len(route_coefficients(inst, r)) for r in ctx.ods[0].routes)
    assert counts["y"] == 2 and counts["zeta"] == n_keys
    model2, vmap2 = build_choice_milp(inst, ctx, K=6)
    assert vmap2.count("rho") == 12
    assert {c: vmap2.count(c) for c in counts if c != "rho"} == {c: v for c, v in counts.items() if c != "rho"}


def test_choice_errors():
    inst, _ = _choice_instance()
    bad = ChoiceContext((ODGroup("a", 1.0, (("1", "9"),), (0.0,)),))
    with pytest.raises(IngestError):
        build_choice_milp(inst, bad)
    with pytest.raises(ConfigurationError):
        build_choice_milp(inst, _choice_instance()[1], K=1)


def test_choice_single_route_reduces_to_fixed_route():
    net = chain_network(3)
    inst = build_instance(net, [], 2, GU(PowerAlpha(1.1)))
    ctx = ChoiceContext((ODGroup("a", 2.0, (("1", "2", "3"),), (0.5,)), ODGroup("b", 1.0, (("3",),), (0.2,))))
    model, vmap = build_choice_milp(inst, ctx, K=5)
    res = solve_milp(model)
    sel = vmap.selected(res.incumbent)
    assert res.incumbent[vmap["p", (0, 0)]] == pytest.approx(1.0)
    assert res.value == pytest.approx(eval_choice_objective(inst, ctx, sel), abs=1e-6)
    fixed = build_instance(net, [Trajectory(("1", "2", "3"), 2.0), Trajectory(("3",), 1.0)], 2, GU(PowerAlpha(1.1)))
    best = max(plan_utility(fixed, set(c)) for n in range(3) for c in itertools.combinations("123", n))
    assert res.value == pytest.approx(best - 2.0 * 0.5 - 0.2, abs=1e-6)


@pytest.mark.parametrize("sel", [set(), {"1"}, {"1", "2"}, {"3", "4"}, {"2", "3"}])
def test_choice_fixed_x_matches_ll_lin(sel):
    inst, _ = _choice_instance()
    inst = inst.with_budget(4)
    ctx = ChoiceContext((ODGroup("a", 3.0, (("1", "2"), ("3", "4"), ("2", "3")), (1.0, 1.2, 0.4)),
                         ODGroup("b", 1.0, (("1",), ("4",)), (0.3, 0.1))))
    K = 8
    model, vmap = build_choice_milp(inst, ctx, K=K)
    res = solve_lp(_fix(model, vmap, sel))
    assert res.optimal
    ref = ll_lin_solve(inst, ctx, sel, K=K)
    for key, pv in ref.p.items():
        assert res.x[vmap["p", key]] == pytest.approx(pv, abs=1e-6)
    assert strong_duality_residual(model, res.x) <= 1e-6
