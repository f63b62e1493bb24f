"""Run decomposition, contiguous sublists and the beta expansion of run utilities.

Everything here is positional: a trajectory is a sequence of segment ids and a
position is covered when its id is selected.  Sublists are half-open index
ranges ``(start, stop)`` into the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .model import AC, ContinuityFunction, PlanningInstance, Trajectory, UtilitySpec

Span = tuple[int, int]


@dataclass(frozen=True)
class RunDecomposition:
    runs: tuple[Span, ...]

    def __iter__(self):
        return iter(self.runs)

    def __len__(self):
        return len(self.runs)

    @property
    def sizes(self) -> list[int]:
        return [b - a for a, b in self.runs]

    def segments(self, traj: Trajectory) -> list[tuple]:
        return [traj.segments[a:b] for a, b in self.runs]


def _ids(traj) -> Sequence:
    return traj.segments if isinstance(traj, Trajectory) else traj


def decompose_runs(traj, selected) -> RunDecomposition:
    """Maximal runs of consecutive covered positions."""
    ids = _ids(traj)
    runs = []
    start = None
    for k, s in enumerate(ids):
        if s in selected:
            if start is None:
                start = k
        elif start is not None:
            runs.append((start, k))
            start = None
    if start is not None:
        runs.append((start, len(ids)))
    return RunDecomposition(tuple(runs))


def _measure_fn(lengths: Sequence[float] | None, length_weighted: bool):
    if not length_weighted:
        return lambda a, b: b - a
    if lengths is None:
        raise ValueError("length-weighted utility needs per-position lengths")
    prefix = [0.0]
    for x in lengths:
        prefix.append(prefix[-1] + x)
    return lambda a, b: prefix[b] - prefix[a]


def utility_of_runs(runs: RunDecomposition, spec: UtilitySpec | ContinuityFunction,
                    lengths: Sequence[float] | None = None) -> float:
    """Sum of f(measure(run)) over the runs."""
    f, lw = _continuity(spec)
    measure = _measure_fn(lengths, lw)
    return sum(f(measure(a, b)) for a, b in runs)


def _continuity(spec) -> tuple[ContinuityFunction, bool]:
    if isinstance(spec, ContinuityFunction):
        return spec, False
    if isinstance(spec, AC):
        return spec.as_gu().f, False
    return spec.f, spec.length_weighted


def enumerate_sublists(traj) -> list[Span]:
    """All contiguous ranges, shortest first then by start position."""
    n = len(_ids(traj))
    return [(a, a + k) for k in range(1, n + 1) for a in range(n - k + 1)]


def beta_coefficients(traj, f: ContinuityFunction, length_weighted: bool = False,
                      lengths: Sequence[float] | None = None) -> dict[Span, float]:
    """Coefficients beta_l making sum_l beta_l prod_{i in l} x_i equal the run utility.

    beta_l = F(l) - F(l minus first) - F(l minus last) + F(core), with F of an empty
    range taken as 0.  With cardinality as measure this is the second difference
    f(k) - 2 f(k-1) + f(k-2) under f(0) = f(-1) = 0.
    """
    measure = _measure_fn(lengths, length_weighted)

    def F(a, b):
        return f(measure(a, b)) if b > a else 0.0

    out = {}
    for a, b in enumerate_sublists(traj):
        if b - a == 1:
            out[(a, b)] = F(a, b)
        else:
            out[(a, b)] = F(a, b) - F(a + 1, b) - F(a, b - 1) + F(a + 1, b - 1)
    return out


def expansion_value(traj, selected, family: dict[Span, float]) -> float:
    """sum of beta_l over the sublists l that lie entirely on covered positions."""
    ids = _ids(traj)
    total = 0.0
    for a, b in decompose_runs(ids, selected):
        for (s, t), beta in family.items():
            if a <= s and t <= b:
                total += beta
    return total


def position_lengths_km(instance: PlanningInstance, traj: Trajectory) -> list[float]:
    net = instance.network
    return [net.length(s) / 1000.0 for s in traj.segments]


def trajectory_utility(instance: PlanningInstance, traj: Trajectory, selected,
                       spec: UtilitySpec | None = None) -> float:
    """Unweighted v_x(r) for one trajectory under the instance (or given) utility."""
    spec = instance.utility if spec is None else spec
    ids = traj.segments
    if isinstance(spec, AC):
        on = [s in selected for s in ids]
        return sum(on) + spec.lam * sum(1 for u, v in zip(on, on[1:]) if u and v)
    runs = decompose_runs(ids, selected)
    lengths = position_lengths_km(instance, traj) if spec.length_weighted else None
    return utility_of_runs(runs, spec, lengths)


def plan_utility(instance: PlanningInstance, selected) -> float:
    selected = frozenset(selected)
    return sum(t.weight * trajectory_utility(instance, t, selected) for t in instance.trajectories)


# --- merged sublist family over an instance ----------------------------------

def canonical_key(ids: Sequence) -> tuple:
    """A sublist and its reverse denote the same stretch of road."""
    t = tuple(ids)
    r = t[::-1]
    return t if _order(t) <= _order(r) else r


def _order(t: tuple):
    return tuple((type(x).__name__, x) for x in t)


@dataclass
class SublistFamily:
    """Canonical sublists of a set of routes with merged (weighted) betas.

    ``entries`` maps canonical id tuples to the merged coefficient; ``children``
    gives the two nested sublists obtained by dropping the first or last id.
    Singletons are keyed by one-element tuples.
    """

    entries: dict[tuple, float] = field(default_factory=dict)
    children: dict[tuple, tuple[tuple, tuple]] = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def add_route(self, ids: Sequence, betas: dict[Span, float], weight: float = 1.0):
        ids = tuple(ids)
        for (a, b), beta in betas.items():
            key = canonical_key(ids[a:b])
            if key not in self.entries:
                self.entries[key] = 0.0
                if len(key) > 1:
                    self.children[key] = (canonical_key(key[1:]), canonical_key(key[:-1]))
            self.entries[key] += weight * beta

    def singleton(self, sid) -> float:
        return self.entries.get((sid,), 0.0)

    def multi(self) -> list[tuple]:
        return [k for k in self.entries if len(k) > 1]

    def min_multi_beta(self) -> float:
        return min((self.entries[k] for k in self.multi()), default=0.0)

    def value(self, selected) -> float:
        return sum(b for k, b in self.entries.items() if all(s in selected for s in k))


def route_betas(instance: PlanningInstance, ids: Sequence, spec: UtilitySpec | None = None) -> dict[Span, float]:
    spec = instance.utility if spec is None else spec
    f, lw = _continuity(spec)
    lengths = [instance.network.length(s) / 1000.0 for s in ids] if lw else None
    return beta_coefficients(ids, f, lw, lengths)


def instance_family(instance: PlanningInstance, spec: UtilitySpec | None = None) -> SublistFamily:
    """Merged weighted family over all trajectories of the instance."""
    fam = SublistFamily()
    for t in instance.trajectories:
        if t.weight == 0:
            continue
        fam.add_route(t.segments, route_betas(instance, t.segments, spec), t.weight)
    return fam
