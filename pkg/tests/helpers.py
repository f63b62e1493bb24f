"""Small instance builders shared by the test modules."""

from __future__ import annotations

import random

from bikelane.model import AC, GU, Linear, PowerAlpha, RoadNetwork, RoadSegment, Trajectory, build_instance


def chain_network(n: int, lengths=None, costs=None, start: int = 1) -> RoadNetwork:
    ids = [str(k) for k in range(start, start + n)]
    lengths = lengths or [100.0] * n
    costs = costs or [1.0] * n
    segs = [RoadSegment(i, float(l), float(c)) for i, l, c in zip(ids, lengths, costs)]
    return RoadNetwork(segs, list(zip(ids, ids[1:])))


def example1(budget=4.0, utility=None):
    """One trajectory 1..5 on a chain with unit costs."""
    net = chain_network(5)
    return build_instance(net, [Trajectory(("1", "2", "3", "4", "5"))], budget, utility or AC(1.0))


def random_graph_instance(rng: random.Random, n_seg: int, n_traj: int, utility, budget_fraction=None,
                          max_len: int = 6, integer_costs: bool = True):
    """Random connected segment graph (a spanning path plus extra pairs) with walk trajectories."""
    ids = [f"s{k}" for k in range(n_seg)]
    costs = [float(rng.randint(1, 5)) if integer_costs else rng.uniform(0.5, 5.0) for _ in ids]
    lengths = [rng.uniform(50, 400) for _ in ids]
    segs = [RoadSegment(i, l, c) for i, l, c in zip(ids, lengths, costs)]
    pairs = set(zip(ids, ids[1:]))
    for _ in range(n_seg // 2):
        a, b = rng.sample(ids, 2)
        if (b, a) not in pairs:
            pairs.add((a, b))
    net = RoadNetwork(segs, sorted(pairs))
    trajs = []
    for k in range(n_traj):
        cur = rng.choice(ids)
        path = [cur]
        for _ in range(rng.randint(0, max_len - 1)):
            opts = [s for s in net.adjacency[cur] if s not in path]
            if not opts:
                break
            cur = rng.choice(opts)
            path.append(cur)
        trajs.append(Trajectory(tuple(path), float(rng.choice([1, 1, 2, 3])), f"t{k}"))
    frac = budget_fraction if budget_fraction is not None else rng.uniform(0.15, 0.7)
    budget = round(frac * net.total_cost(), 3)
    return build_instance(net, trajs, budget, utility)


def random_convex_utility(rng: random.Random, allow_length=False):
    """Linear(lam) or PowerAlpha(alpha); length weighting only with PowerAlpha (Linear is negative below 1 km)."""
    if rng.random() < 0.5:
        return GU(Linear(rng.choice([0.0, 0.5, 1.0, 2.0, 10.0])))
    f = PowerAlpha(rng.choice([1.0, 1.02, 1.05, 1.1, 1.5]))
    return GU(f, allow_length and rng.random() < 0.3)
