import csv
import random

import pytest
from hypothesis import given, strategies as st

from bikelane.metrics import (
    CONNECTIONS_DEFINITION, REPORT_COLUMNS, TopologyReport, percent_change, topology, tradeoff_table,
    write_reports_csv, write_tradeoff_csv,
)
from bikelane.model import GU, PowerAlpha, RoadNetwork, RoadSegment, Trajectory, build_instance

from helpers import chain_network, example1, random_graph_instance


def _report(**kw):
    base = dict(n_lanes=10, continuous_pairs=5, mean_connections=1.0, mean_run_size=3.3, max_run_size=6,
                coverage_ratio=0.5, strict_coverage_ratio=0.2)
    base.update(kw)
    return TopologyReport(**base)


def test_runs_of_worked_selection():
    rep = topology(example1(), {"1", "3", "4", "5"})
    assert rep.mean_run_size == 2.0
    assert rep.max_run_size == 3
    assert rep.n_lanes == 4
    assert rep.continuous_pairs == 2


def test_empty_plan_is_all_zero():
    rep = topology(example1(), set())
    assert all(getattr(rep, c) == 0 for c in REPORT_COLUMNS)


@pytest.mark.parametrize("n", [2, 3, 7, 12])
def test_full_chain_connections(n):
    net = chain_network(n)
    inst = build_instance(net, [Trajectory(tuple(net.ids))], float(n), GU(PowerAlpha(1.1)))
    rep = topology(inst, set(net.ids))
    assert rep.mean_connections == pytest.approx(2 * (n - 1) / n, abs=1e-15)
    assert rep.coverage_ratio == 1.0
    assert rep.strict_coverage_ratio == 1.0


def test_weighted_mean_unweighted_max():
    net = chain_network(6)
    trajs = [Trajectory(("1", "2", "3"), 3.0), Trajectory(("5",), 1.0), Trajectory(("4", "5", "6"), 1.0)]
    inst = build_instance(net, trajs, 6.0, GU(PowerAlpha(1.1)))
    rep = topology(inst, {"1", "2", "3", "5"})
    # runs: 3 (w=3), 1 (w=1), 1 (w=1)
    assert rep.mean_run_size == pytest.approx((3 * 3 + 1 + 1) / 5)
    assert rep.max_run_size == 3
    assert rep.strict_coverage_ratio == pytest.approx(4 / 5)


def test_demand_weighted_coverage():
    net = chain_network(3)
    inst = build_instance(net, [Trajectory(("1", "2"), 2.0), Trajectory(("2", "3"), 1.0)], 3.0, GU(PowerAlpha(1.1)))
    rep = topology(inst, {"2"})
    # demand: 1 -> 2, 2 -> 3, 3 -> 1
    assert rep.coverage_ratio == pytest.approx(3 / 6)


def test_tradeoff_examples():
    base = _report()
    assert tradeoff_table(base, [base]) == [{"coverage_ratio": 0.0, "mean_connections": 0.0, "mean_run_size": 0.0}]
    row = tradeoff_table(base, [_report(mean_run_size=4.7, coverage_ratio=0.4)])[0]
    assert round(row["mean_run_size"], 2) == 42.42
    assert row["coverage_ratio"] == pytest.approx(-20.0)


def test_tradeoff_zero_field_flagged_and_empty_baseline_rejected():
    row = tradeoff_table(_report(mean_connections=0.0), [_report()])[0]
    assert row["mean_connections"] is None
    assert percent_change(0.0, 1.0) is None
    with pytest.raises(ValueError):
        tradeoff_table(_report(n_lanes=0), [_report()])


def test_csv_layout(tmp_path):
    path = tmp_path / "r.csv"
    write_reports_csv(path, [_report(), _report(n_lanes=3)], labels=["a", "b"])
    lines = path.read_text().splitlines()
    assert lines[0] == f"# {CONNECTIONS_DEFINITION}"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["label", *REPORT_COLUMNS]
    assert rows[2][0] == "b" and rows[2][1] == "3"
    tpath = tmp_path / "t.csv"
    write_tradeoff_csv(tpath, tradeoff_table(_report(mean_connections=0.0), [_report()]), ["x"])
    assert tpath.read_text().splitlines()[1].split(",")[2] == "n/a"


@given(st.integers(0, 10_000))
def test_report_invariants_and_monotonicity(seed):
    rng = random.Random(seed)
    inst = random_graph_instance(rng, rng.randint(3, 14), rng.randint(1, 8), GU(PowerAlpha(1.1)))
    ids = inst.network.ids
    sel = {s for s in ids if rng.random() < 0.5}
    rep = topology(inst, sel)
    assert 0.0 <= rep.coverage_ratio <= 1.0
    assert 0.0 <= rep.strict_coverage_ratio <= 1.0
    if rep.n_lanes:
        assert rep.mean_connections == 2 * rep.continuous_pairs / rep.n_lanes
    if rep.max_run_size:
        assert rep.max_run_size >= rep.mean_run_size - 1e-12
    rest = [s for s in ids if s not in sel]
    if rest:
        bigger = topology(inst, sel | {rng.choice(rest)})
        assert bigger.continuous_pairs >= rep.continuous_pairs
        assert bigger.coverage_ratio >= rep.coverage_ratio - 1e-15


def test_mean_connections_is_selected_degree():
    segs = [RoadSegment(s, 100.0, 1.0) for s in "abcd"]
    net = RoadNetwork(segs, [("a", "b"), ("a", "c"), ("a", "d"), ("c", "d")])
    inst = build_instance(net, [Trajectory(("a", "b"))], 4.0, GU(PowerAlpha(1.1)))
    sel = {"a", "c", "d"}
    rep = topology(inst, sel)
    deg = [sum(1 for a, b in net.neighbors if s in (a, b) and a in sel and b in sel) for s in sel]
    assert rep.mean_connections == pytest.approx(sum(deg) / len(sel))
