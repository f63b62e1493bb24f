"""Core domain types: road network, trajectories, utility specs and instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Hashable, Iterable, Mapping, Sequence

SegmentId = Hashable


class IngestError(ValueError):
    """A trajectory or network record references something that does not exist."""


class ValidationError(ValueError):
    """Input violates a structural invariant (adjacency, ranges, ...)."""


class ConfigurationError(ValueError):
    """Bad parameter values (budget, utility parameters, solver options)."""


@dataclass(frozen=True)
class RoadSegment:
    id: SegmentId
    length_m: float
    cost: float | None = None
    geometry: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not self.length_m > 0:
            raise ValidationError(f"segment {self.id!r}: length_m must be > 0")
        if self.cost is None:
            object.__setattr__(self, "cost", float(self.length_m))
        if self.cost < 0:
            raise ValidationError(f"segment {self.id!r}: cost must be >= 0")
        if self.geometry is not None:
            object.__setattr__(self, "geometry", tuple(tuple(p) for p in self.geometry))


class RoadNetwork:
    """Segments (the set V) plus the unordered neighbor pairs (the set N).

    Segment order is the insertion order and is used everywhere as the
    canonical, deterministic ordering.
    """

    def __init__(self, segments: Iterable[RoadSegment], neighbors: Iterable[tuple] = ()):
        self.segments: tuple[RoadSegment, ...] = tuple(segments)
        self.index: dict[SegmentId, int] = {}
        for k, seg in enumerate(self.segments):
            if seg.id in self.index:
                raise ValidationError(f"duplicate segment id {seg.id!r}")
            self.index[seg.id] = k
        pairs = []
        seen = set()
        for a, b in neighbors:
            for s in (a, b):
                if s not in self.index:
                    raise IngestError(f"neighbor pair ({a!r}, {b!r}) references unknown segment {s!r}")
            if a == b:
                raise ValidationError(f"self neighbor pair for {a!r}")
            key = self.pair_key(a, b)
            if key not in seen:
                seen.add(key)
                pairs.append(key)
        self.neighbors: tuple[tuple, ...] = tuple(pairs)
        self._pairset = frozenset(seen)
        adj: dict[SegmentId, list] = {s.id: [] for s in self.segments}
        for a, b in self.neighbors:
            adj[a].append(b)
            adj[b].append(a)
        self.adjacency: Mapping[SegmentId, tuple] = MappingProxyType({k: tuple(v) for k, v in adj.items()})

    def __len__(self):
        return len(self.segments)

    def __contains__(self, sid):
        return sid in self.index

    @property
    def ids(self) -> list:
        return [s.id for s in self.segments]

    def segment(self, sid) -> RoadSegment:
        return self.segments[self.index[sid]]

    def cost(self, sid) -> float:
        return self.segments[self.index[sid]].cost

    def length(self, sid) -> float:
        return self.segments[self.index[sid]].length_m

    def pair_key(self, a, b) -> tuple:
        """Canonical orientation of an unordered pair (network order)."""
        return (a, b) if self.index[a] <= self.index[b] else (b, a)

    def are_neighbors(self, a, b) -> bool:
        return a in self.index and b in self.index and self.pair_key(a, b) in self._pairset

    def sort_ids(self, ids: Iterable) -> list:
        return sorted(ids, key=self.index.__getitem__)

    def total_cost(self, ids: Iterable | None = None) -> float:
        if ids is None:
            return math.fsum(s.cost for s in self.segments)
        return math.fsum(self.cost(i) for i in ids)


@dataclass(frozen=True)
class Trajectory:
    segments: tuple
    weight: float = 1.0
    trip_id: str | None = None
    start_time: object = None  # datetime of the trip start, used by decensoring
    origin: tuple[float, float] | None = None  # (lon, lat)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if len(self.segments) < 1:
            raise ValidationError(f"trajectory {self.trip_id!r} is empty")
        if self.weight < 0 or not math.isfinite(self.weight):
            raise ValidationError(f"trajectory {self.trip_id!r}: weight must be finite and >= 0")
        for a, b in zip(self.segments, self.segments[1:]):
            if a == b:
                raise ValidationError(f"trajectory {self.trip_id!r}: repeated consecutive segment {a!r}")

    def __len__(self):
        return len(self.segments)

    @property
    def od_key(self) -> tuple:
        return (self.segments[0], self.segments[-1])

    def with_weight(self, w: float) -> "Trajectory":
        return Trajectory(self.segments, w, self.trip_id, self.start_time, self.origin)


def validate_trajectory(network: RoadNetwork, traj: Trajectory, label=None):
    label = label if label is not None else traj.trip_id
    for s in traj.segments:
        if s not in network:
            raise IngestError(f"trajectory {label!r}: unknown segment id {s!r}")
    for a, b in zip(traj.segments, traj.segments[1:]):
        if not network.are_neighbors(a, b):
            raise ValidationError(f"trajectory {label!r}: segments {a!r} and {b!r} are not neighbors")


# --- continuity functions -------------------------------------------------

class ContinuityFunction:
    """Increasing function f of run size, with f(0) = f(-1) = 0 by convention."""

    integer_only = False

    def value(self, z: float) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, z: float) -> float:
        if z <= 0:
            return 0.0
        cache = self.__dict__.setdefault("_memo", {})
        v = cache.get(z)
        if v is None:
            v = cache[z] = self.value(z)
        return v

    @property
    def is_convex(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class PowerAlpha(ContinuityFunction):
    """f(z) = z * alpha**z."""

    alpha: float

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ConfigurationError("PowerAlpha requires alpha >= 1")

    def value(self, z):
        return z * self.alpha ** z

    @property
    def is_convex(self):
        return True


@dataclass(frozen=True, eq=True)
class Linear(ContinuityFunction):
    """f(z) = (lam + 1) z - lam: the adjacency-continuity utility of one run."""

    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError("Linear requires lam >= 0")

    def value(self, z):
        return (self.lam + 1.0) * z - self.lam

    @property
    def is_convex(self):
        return True


@dataclass(frozen=True, eq=True)
class Table(ContinuityFunction):
    """Explicit values f(1), ..., f(z_max)."""

    values: tuple[float, ...]
    integer_only = True

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ConfigurationError("Table needs at least one value")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ConfigurationError("Table values must be nondecreasing")

    @property
    def z_max(self) -> int:
        return len(self.values)

    def value(self, z):
        k = int(round(z))
        if abs(z - k) > 1e-9:
            raise ConfigurationError(f"Table f is only defined on integers, got {z}")
        if k > self.z_max:
            raise ConfigurationError(f"Table f queried at {k} beyond z_max={self.z_max}")
        return self.values[k - 1]

    @property
    def is_convex(self):
        # second differences of the zero-extended sequence f(-1)=f(0)=0, f(1), ...
        seq = (0.0, 0.0) + self.values
        return all(seq[k] - 2 * seq[k - 1] + seq[k - 2] >= -1e-12 for k in range(2, len(seq)))


@dataclass(frozen=True)
class AC:
    """Adjacency-continuity utility with continuity weight lam."""

    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError("AC requires lam >= 0")

    @property
    def is_convex(self):
        return True

    def as_gu(self) -> "GU":
        return GU(Linear(self.lam))


@dataclass(frozen=True)
class GU:
    """General run utility sum_s f(measure(s)); measure is run cardinality or run length in km."""

    f: ContinuityFunction
    length_weighted: bool = False

    def __post_init__(self):
        if self.length_weighted and self.f.integer_only:
            raise ConfigurationError("Table f cannot be combined with length-weighted utility")

    @property
    def is_convex(self):
        return self.f.is_convex


UtilitySpec = AC | GU


# --- instance -------------------------------------------------------------

@dataclass(frozen=True)
class InstanceStats:
    longest_trajectory: int
    total_cost: float


@dataclass(frozen=True, eq=False)
class PlanningInstance:
    network: RoadNetwork
    trajectories: tuple[Trajectory, ...]
    budget: float
    utility: UtilitySpec
    demand: Mapping  # d_i
    pair_demand: Mapping  # d_ij keyed by network.pair_key
    stats: InstanceStats

    def with_budget(self, budget: float) -> "PlanningInstance":
        return build_instance(self.network, self.trajectories, budget, self.utility, validate=False)

    def with_utility(self, utility: UtilitySpec) -> "PlanningInstance":
        return build_instance(self.network, self.trajectories, self.budget, utility, validate=False)


def build_instance(network: RoadNetwork, trajectories: Sequence[Trajectory], budget: float,
                   utility: UtilitySpec, *, validate: bool = True) -> PlanningInstance:
    if not (budget >= 0 and math.isfinite(budget)):
        raise ConfigurationError(f"budget must be a finite nonnegative number, got {budget}")
    if not isinstance(utility, (AC, GU)):
        raise ConfigurationError(f"unknown utility spec {utility!r}")
    trajectories = tuple(trajectories)
    if validate:
        for k, t in enumerate(trajectories):
            validate_trajectory(network, t, t.trip_id if t.trip_id is not None else k)
    d = {s.id: 0.0 for s in network.segments}
    dij = {p: 0.0 for p in network.neighbors}
    for t in trajectories:
        w = t.weight
        for s in t.segments:
            d[s] += w
        for a, b in zip(t.segments, t.segments[1:]):
            dij[network.pair_key(a, b)] += w
    stats = InstanceStats(max((len(t) for t in trajectories), default=0), network.total_cost())
    return PlanningInstance(network, trajectories, float(budget), utility,
                            MappingProxyType(d), MappingProxyType(dij), stats)


@dataclass
class ConstructionPlan:
    selected: frozenset
    cost: float
    objective: float
    bound: float | None = None
    feasible: bool = True
    provenance: dict = field(default_factory=dict)

    @property
    def gap(self) -> float | None:
        if self.bound is None:
            return None
        return optimality_gap(self.bound, self.objective)


def optimality_gap(bound: float, objective: float) -> float:
    """(Z_UB - Z) / Z_UB, with a zero bound treated as a zero gap when it is attained."""
    if abs(bound) < 1e-12:
        return 0.0 if abs(bound - objective) < 1e-12 else math.inf
    return (bound - objective) / abs(bound)


def budget_tolerance(budget: float) -> float:
    return 1e-6 * budget + 1e-12


def evaluate_plan(instance: PlanningInstance, selected: Iterable, provenance: dict | None = None) -> ConstructionPlan:
    from .utility import plan_utility

    selected = frozenset(selected)
    net = instance.network
    for s in selected:
        if s not in net:
            raise IngestError(f"unknown segment id {s!r}")
    cost = net.total_cost(net.sort_ids(selected))
    obj = plan_utility(instance, selected)
    return ConstructionPlan(selected, cost, obj, None,
                            cost <= instance.budget + budget_tolerance(instance.budget),
                            dict(provenance or {}))
