"""Coverage against continuity: plans for increasing lambda compared with the lambda = 0 plan.

    python3 scripts/tradeoff.py --lams 0 2 10 --out tradeoff
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from bikelane import GU, Linear, gu_lag
from bikelane.ingest import synth_instance
from bikelane.metrics import topology, tradeoff_table, write_reports_csv, write_tradeoff_csv
from bikelane.model import build_instance


@dataclass
class TradeoffConfig:
    seed: int = 0
    rows: int = 8
    cols: int = 8
    n_trajectories: int = 800
    budget_fraction: float = 0.25
    lams: list[float] = field(default_factory=lambda: [0.0, 2.0, 10.0])
    node_limit: int = 20
    out: str = "tradeoff"


def run(cfg: TradeoffConfig):
    base = synth_instance(cfg.seed, cfg.rows, cfg.cols, cfg.n_trajectories, budget_fraction=cfg.budget_fraction)
    reports = []
    for lam in cfg.lams:
        # AC with lambda is GU with Linear(lambda); the Lagrangian engine handles the GU form
        inst = build_instance(base.network, base.trajectories, base.budget, GU(Linear(lam)))
        plan, _ = gu_lag(inst, node_limit=cfg.node_limit)
        rep = topology(inst, plan)
        print(f"lambda={lam:g} gap={plan.gap:.4f} {rep}", flush=True)
        reports.append(rep)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = [f"lambda={lam:g}" for lam in cfg.lams]
    write_reports_csv(out / "reports.csv", reports, labels)
    write_tradeoff_csv(out / "tradeoff.csv", tradeoff_table(reports[0], reports[1:]), labels[1:])
    return reports


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 2.0, 10.0])
    ap.add_argument("--budget-fraction", type=float, default=TradeoffConfig.budget_fraction)
    ap.add_argument("--out", default=TradeoffConfig.out)
    a = ap.parse_args()
    run(TradeoffConfig(seed=a.seed, lams=a.lams, budget_fraction=a.budget_fraction, out=a.out))


if __name__ == "__main__":
    main()
