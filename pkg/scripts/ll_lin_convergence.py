"""How fast the piecewise-linear lower level approaches the logit choice as K doubles."""

from __future__ import annotations

import argparse
import random
from dataclasses import dataclass, field

from bikelane import GU, PowerAlpha, RoadNetwork, RoadSegment, build_instance
from bikelane.choice import ChoiceContext, ODGroup, ll_lin_solve, ll_objective, mnl_probabilities


@dataclass
class ConvergenceConfig:
    contexts: int = 50
    Ks: list[int] = field(default_factory=lambda: [10, 20, 40, 80])
    p_min: float = 1e-4
    seed: int = 0


def _context(rng, ids):
    ods = []
    for m in range(rng.randint(1, 3)):
        routes = []
        for _ in range(rng.randint(2, 4)):
            a = rng.randrange(len(ids))
            routes.append(tuple(ids[a:a + rng.randint(1, 4)]))
        ods.append(ODGroup(m, rng.uniform(0.5, 3), tuple(routes), tuple(rng.uniform(0, 3) for _ in routes)))
    return ChoiceContext(tuple(ods))


def run(cfg: ConvergenceConfig):
    ids = [str(k) for k in range(1, 7)]
    net = RoadNetwork([RoadSegment(s, 100.0, 1.0) for s in ids], list(zip(ids, ids[1:])))
    inst = build_instance(net, [], 3.0, GU(PowerAlpha(1.1)))
    rng = random.Random(cfg.seed)
    regret = {K: 0.0 for K in cfg.Ks}
    for _ in range(cfg.contexts):
        ctx = _context(rng, ids)
        sel = {s for s in ids if rng.random() < 0.5}
        base = ll_objective(inst, ctx, mnl_probabilities(inst, ctx, sel), sel)
        for K in cfg.Ks:
            p = ll_lin_solve(inst, ctx, sel, K, cfg.p_min).p
            regret[K] += (ll_objective(inst, ctx, p, sel) - base) / cfg.contexts
    prev = None
    for K in cfg.Ks:
        ratio = "" if prev is None else f"  ratio {regret[K] / prev:.3f}"
        print(f"K={K:4d}  mean LL regret {regret[K]:.3e}{ratio}")
        prev = regret[K]
    return regret


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--contexts", type=int, default=50)
    ap.add_argument("--Ks", type=int, nargs="+", default=[10, 20, 40, 80])
    a = ap.parse_args()
    run(ConvergenceConfig(contexts=a.contexts, Ks=a.Ks))


if __name__ == "__main__":
    main()
