"""Topology and coverage statistics of a plan, and percentage-change tables between plans."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

from .model import ConstructionPlan, PlanningInstance
from .utility import decompose_runs

# mean_connections counts each selected neighbor pair once per endpoint: 2 * pairs / lanes
CONNECTIONS_DEFINITION = "mean_connections = 2*continuous_pairs/n_lanes"


@dataclass(frozen=True)
class TopologyReport:
    n_lanes: int
    continuous_pairs: int
    mean_connections: float
    mean_run_size: float
    max_run_size: int
    coverage_ratio: float
    strict_coverage_ratio: float


REPORT_COLUMNS = tuple(f.name for f in fields(TopologyReport))


def topology(instance: PlanningInstance, plan) -> TopologyReport:
    """Statistics of ``plan`` (a ConstructionPlan or an iterable of ids)."""
    sel = frozenset(plan.selected if isinstance(plan, ConstructionPlan) else plan)
    net = instance.network
    n = len(sel)
    pairs = sum(1 for a, b in net.neighbors if a in sel and b in sel)
    wsum = wtot = 0.0
    longest = 0
    covered_w = total_w = 0.0
    for t in instance.trajectories:
        total_w += t.weight
        if all(s in sel for s in t.segments):
            covered_w += t.weight
        for size in decompose_runs(t, sel).sizes:
            wsum += t.weight * size
            wtot += t.weight
            longest = max(longest, size)
    demand_total = math.fsum(instance.demand.values())
    covered = math.fsum(instance.demand[s] for s in sel)
    return TopologyReport(
        n_lanes=n,
        continuous_pairs=pairs,
        mean_connections=2.0 * pairs / n if n else 0.0,
        mean_run_size=wsum / wtot if wtot > 0 else 0.0,
        max_run_size=longest,
        coverage_ratio=min(1.0, covered / demand_total) if demand_total > 0 else 0.0,
        strict_coverage_ratio=covered_w / total_w if total_w > 0 else 0.0,
    )


TRADEOFF_FIELDS = ("coverage_ratio", "mean_connections", "mean_run_size")


def percent_change(base: float, value: float) -> float | None:
    """None flags a zero baseline."""
    if base == 0:
        return None
    return 100.0 * (value - base) / base


def tradeoff_table(baseline: TopologyReport, others) -> list[dict]:
    if baseline.n_lanes <= 0:
        raise ValueError("baseline plan has no lanes")
    rows = []
    for rep in others:
        rows.append({k: percent_change(getattr(baseline, k), getattr(rep, k)) for k in TRADEOFF_FIELDS})
    return rows


def write_reports_csv(path, reports, labels=None):
    """One row per report; columns ``label`` followed by REPORT_COLUMNS in declaration order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        fh.write(f"# {CONNECTIONS_DEFINITION}\n")
        w.writerow(("label",) + REPORT_COLUMNS)
        for i, rep in enumerate(reports):
            d = asdict(rep)
            label = labels[i] if labels is not None else str(i)
            w.writerow([label] + [_fmt(d[c]) for c in REPORT_COLUMNS])


def write_tradeoff_csv(path, rows, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label",) + tuple(f"{k}_pct" for k in TRADEOFF_FIELDS))
        for label, row in zip(labels, rows):
            w.writerow([label] + ["n/a" if row[k] is None else _fmt(row[k]) for k in TRADEOFF_FIELDS])


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)
