"""File formats, geohash neighborhoods, stock-out decensoring and synthetic grid instances."""

from __future__ import annotations

import datetime as dt
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import (
    GU, IngestError, PlanningInstance, PowerAlpha, RoadNetwork, RoadSegment, Trajectory,
    UtilitySpec, ValidationError, build_instance,
)

log = logging.getLogger(__name__)

PERIODS_PER_DAY = 144  # 10-minute bins
GEOHASH_PRECISION = 7
_BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"


class ParseError(IngestError):
    pass


# --- trajectories and networks -------------------------------------------------

def parse_segment_list(text: str, where: str = "") -> tuple[str, ...]:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise ParseError(f"{where}: segment list must be enclosed in [ ]")
    ids = tuple(text[1:-1].split())
    if not ids:
        raise ParseError(f"{where}: empty segment list")
    return ids


def parse_trajectories(path) -> list[Trajectory]:
    """``trip_id,ISO-8601 start,origin_lon,origin_lat,[seg1 seg2 ...]`` per line.

    A trailing ``,weight`` after the bracket is accepted (written by the decensor step).
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            parts = line.split(",", 4)
            if len(parts) != 5:
                raise ParseError(f"{where}: expected 5 comma-separated fields")
            trip, start, lon, lat, segs = (p.strip() for p in parts)
            try:
                start_t = dt.datetime.fromisoformat(start)
                origin = (float(lon), float(lat))
            except ValueError as exc:
                raise ParseError(f"{where}: {exc}") from None
            weight = 1.0
            close = segs.rfind("]")
            if close != -1 and segs[close + 1:].strip():
                tail = segs[close + 1:].strip()
                if not tail.startswith(","):
                    raise ParseError(f"{where}: unexpected text after segment list")
                try:
                    weight = float(tail[1:])
                except ValueError as exc:
                    raise ParseError(f"{where}: {exc}") from None
                segs = segs[:close + 1]
            ids = parse_segment_list(segs, where)
            try:
                out.append(Trajectory(ids, weight, trip, start_t, origin))
            except ValidationError as exc:
                raise ParseError(f"{where}: {exc}") from None
    return out


def write_trajectories(trajectories: Iterable[Trajectory], path):
    with open(path, "w", encoding="utf-8") as fh:
        for k, t in enumerate(trajectories):
            trip = t.trip_id if t.trip_id is not None else f"t{k}"
            start = t.start_time.isoformat() if t.start_time is not None else "1970-01-01T00:00:00"
            lon, lat = t.origin if t.origin is not None else (0.0, 0.0)
            tail = "" if t.weight == 1.0 else f",{t.weight!r}"
            fh.write(f"{trip},{start},{lon!r},{lat!r},[{' '.join(str(s) for s in t.segments)}]{tail}\n")


def _parse_polyline(text: str, where: str):
    text = text.strip()
    if not text:
        return None
    pts = []
    for pair in text.split(";"):
        xy = pair.split()
        if len(xy) != 2:
            raise ParseError(f"{where}: polyline points are 'lon lat' separated by ';'")
        pts.append((float(xy[0]), float(xy[1])))
    return tuple(pts)


def parse_network(path, unit_cost: float = 1.0) -> RoadNetwork:
    """Segment lines ``id,length_m,cost,polyline?`` then a ``NEIGHBORS`` section of ``id_a,id_b``.

    An empty cost field means ``unit_cost * length_m``; polylines are ``lon lat;lon lat;...``.
    """
    segments, pairs = [], []
    in_pairs = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            if line.upper() == "NEIGHBORS":
                in_pairs = True
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if in_pairs:
                    if len(parts) != 2:
                        raise ParseError(f"{where}: neighbor lines are 'id_a,id_b'")
                    pairs.append((parts[0], parts[1]))
                else:
                    if len(parts) not in (3, 4):
                        raise ParseError(f"{where}: segment lines are 'id,length_m,cost,polyline?'")
                    length = float(parts[1])
                    cost = float(parts[2]) if parts[2] else unit_cost * length
                    geom = _parse_polyline(parts[3], where) if len(parts) == 4 else None
                    segments.append(RoadSegment(parts[0], length, cost, geom))
            except (ValueError, ValidationError) as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(f"{where}: {exc}") from None
    return RoadNetwork(segments, pairs)


def write_network(network: RoadNetwork, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in network.segments:
            geom = ";".join(f"{x!r} {y!r}" for x, y in s.geometry) if s.geometry else ""
            fh.write(f"{s.id},{s.length_m!r},{s.cost!r},{geom}\n")
        fh.write("NEIGHBORS\n")
        for a, b in network.neighbors:
            fh.write(f"{a},{b}\n")


# --- geohash ----------------------------------------------------------------------

def geohash_encode(lon: float, lat: float, precision: int = GEOHASH_PRECISION) -> str:
    if precision < 1:
        raise ValueError("precision must be >= 1")
    if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
        raise ValueError(f"coordinates out of range: lon={lon}, lat={lat}")
    lon_lo, lon_hi = -180.0, 180.0
    lat_lo, lat_hi = -90.0, 90.0
    chars = []
    bits = 0
    nbits = 0
    even = True  # even bits refine longitude
    while len(chars) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if lon >= mid:
                bits = bits * 2 + 1
                lon_lo = mid
            else:
                bits *= 2
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if lat >= mid:
                bits = bits * 2 + 1
                lat_lo = mid
            else:
                bits *= 2
                lat_hi = mid
        even = not even
        nbits += 1
        if nbits == 5:
            chars.append(_BASE32[bits])
            bits = nbits = 0
    return "".join(chars)


# --- stock-outs and decensoring ---------------------------------------------------

@dataclass(frozen=True)
class StockObservation:
    neighborhood: str
    period: int
    day: dt.date
    available: int

    def __post_init__(self):
        if not 0 <= self.period < PERIODS_PER_DAY:
            raise ValidationError(f"period {self.period} outside [0, {PERIODS_PER_DAY - 1}]")
        if self.available < 0:
            raise ValidationError("available must be >= 0")


def parse_stock(path) -> list[StockObservation]:
    """``neighborhood,day,period,available`` per line (day in ISO format)."""
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected neighborhood,day,period,available")
            try:
                obs = StockObservation(parts[0], int(parts[2]), dt.date.fromisoformat(parts[1]), int(parts[3]))
            except (ValueError, ValidationError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            key = (obs.neighborhood, obs.period, obs.day)
            if key in seen:
                raise ParseError(f"{path}:{lineno}: duplicate observation {key}")
            seen.add(key)
            out.append(obs)
    return out


def detect_stockouts(observations: Iterable[StockObservation], threshold: int = 0, *,
                     days: Sequence[dt.date] | None = None, neighborhoods: Iterable[str] | None = None,
                     periods: Iterable[int] = range(PERIODS_PER_DAY), lenient: bool = False) -> set:
    """(neighborhood, period, day) cells whose stock is at or below ``threshold``.

    Cells of the neighborhood x period x day grid without an observation count as
    stocked out unless ``lenient``.
    """
    observations = list(observations)
    flagged = set()
    observed = set()
    for o in observations:
        key = (o.neighborhood, o.period, o.day)
        observed.add(key)
        if o.available <= threshold:
            flagged.add(key)
    if not lenient:
        hoods = set(neighborhoods) if neighborhoods is not None else {o.neighborhood for o in observations}
        days = list(days) if days is not None else sorted({o.day for o in observations})
        for n in hoods:
            for p in periods:
                for d in days:
                    if (n, p, d) not in observed:
                        flagged.add((n, p, d))
    return flagged


@dataclass
class DecensorReport:
    weights: dict = field(default_factory=dict)  # (neighborhood, period) -> weight or None
    stockout_days: dict = field(default_factory=dict)
    horizon_days: int = 0
    dropped: list = field(default_factory=list)  # trip ids whose origin cell never had stock
    missing_cells: int = 0


def trip_cell(traj: Trajectory) -> tuple[str, int]:
    if traj.origin is None or traj.start_time is None:
        raise ValidationError(f"trajectory {traj.trip_id!r} lacks origin metadata")
    lon, lat = traj.origin
    t = traj.start_time
    return geohash_encode(lon, lat, GEOHASH_PRECISION), (t.hour * 60 + t.minute) // 10


def decensor(trajectories: Sequence[Trajectory], observations: Sequence[StockObservation],
             horizon_days: int, threshold: int = 0, lenient: bool = False,
             days: Sequence[dt.date] | None = None) -> tuple[list[Trajectory], DecensorReport]:
    """Weight each trip by 1 / (days without stock-out in its origin neighborhood and period)."""
    if horizon_days < 1:
        raise ValueError("horizon_days must be >= 1")
    days = sorted(days) if days is not None else sorted({o.day for o in observations})
    if len(days) > horizon_days:
        raise ValidationError(f"observations span {len(days)} days, more than the horizon {horizon_days}")
    cells = {}
    for t in trajectories:
        cells[id(t)] = trip_cell(t)
    wanted = set(cells.values())
    hoods = {n for n, _ in wanted}
    periods = sorted({p for _, p in wanted})
    obs = [o for o in observations if o.neighborhood in hoods]
    flagged = detect_stockouts(obs, threshold, days=days, neighborhoods=hoods, periods=periods, lenient=lenient)
    observed = {(o.neighborhood, o.period, o.day) for o in obs}
    per_cell = defaultdict(int)
    for n, p, d in flagged:
        per_cell[n, p] += 1
    unseen_days = 0 if lenient else horizon_days - len(days)
    report = DecensorReport(horizon_days=horizon_days)
    report.missing_cells = sum(1 for n, p in wanted for d in days if (n, p, d) not in observed)
    for cell in sorted(wanted):
        k = per_cell.get(cell, 0) + unseen_days
        report.stockout_days[cell] = k
        report.weights[cell] = 1.0 / (horizon_days - k) if horizon_days - k > 0 else None
    out = []
    for t in trajectories:
        w = report.weights[cells[id(t)]]
        if w is None:
            report.dropped.append(t.trip_id)
            continue
        out.append(t.with_weight(w))
    return out, report


# --- synthetic instances ------------------------------------------------------------

def grid_network(rows: int, cols: int, rng: random.Random | None = None, unit_cost: float = 1.0,
                 origin=(113.50, 22.20), spacing_deg: float = 0.002, block_m: float = 200.0,
                 jitter: float = 0.0) -> tuple[RoadNetwork, dict]:
    """Street grid of rows x cols intersections; segments are the grid edges.

    Block lengths are ``block_m``, scaled by uniform(1 - jitter, 1 + jitter) when ``jitter > 0``.
    Returns the network and a map segment id -> (node_a, node_b).
    """
    if not 0 <= jitter < 1:
        raise ValueError("jitter must lie in [0, 1)")
    if rows * cols < 2 or rows < 1 or cols < 1:
        raise ValueError("grid needs at least two intersections")
    rng = rng or random.Random(0)
    ends = {}
    segs = []

    def coord(r, c):
        return (origin[0] + c * spacing_deg, origin[1] + r * spacing_deg)

    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if r2 < rows and c2 < cols:
                    sid = f"e{len(segs)}"
                    length = round(block_m * rng.uniform(1 - jitter, 1 + jitter), 1) if jitter else block_m
                    segs.append(RoadSegment(sid, length, unit_cost * length, (coord(r, c), coord(r2, c2))))
                    ends[sid] = ((r, c), (r2, c2))
    incident = defaultdict(list)
    for sid, (a, b) in ends.items():
        incident[a].append(sid)
        incident[b].append(sid)
    pairs = []
    for node in sorted(incident):
        inc = incident[node]
        for i in range(len(inc)):
            for j in range(i + 1, len(inc)):
                pairs.append((inc[i], inc[j]))
    return RoadNetwork(segs, pairs), ends


def random_walks(network: RoadNetwork, ends: dict, n: int, mean_length: float,
                 rng: random.Random) -> list[Trajectory]:
    """Self-avoiding walks over segments; lengths are 1 + Poisson(mean_length - 1)-like draws."""
    incident = defaultdict(list)
    for sid, (a, b) in ends.items():
        incident[a].append(sid)
        incident[b].append(sid)
    ids = network.ids
    out = []
    truncated = 0
    for k in range(n):
        target = max(1, int(round(rng.expovariate(1.0 / max(mean_length - 1.0, 1e-9)))) + 1) \
            if mean_length > 1 else 1
        seg = rng.choice(ids)
        a, b = ends[seg]
        node = b if rng.random() < 0.5 else a
        path = [seg]
        used = {seg}
        while len(path) < target:
            options = [s for s in incident[node] if s not in used]
            if not options:
                truncated += 1
                break
            nxt = rng.choice(options)
            x, y = ends[nxt]
            node = y if x == node else x
            path.append(nxt)
            used.add(nxt)
        out.append(Trajectory(tuple(path), 1.0, f"t{k}"))
    if truncated:
        log.warning("%d synthetic walks truncated (no unused continuation)", truncated)
    return out


def hotspot_trips(network: RoadNetwork, ends: dict, n: int, rng: random.Random,
                  n_hotspots: int = 3, spread: float = 1.5, detour: float = 0.3) -> list[Trajectory]:
    """Trips between intersections drawn around a few hotspots, routed on perturbed shortest paths.

    Each trip's edge weights are segment lengths scaled by uniform(1, 1 + detour), so
    routes between the same endpoints vary a little.
    """
    import networkx as nx

    g = nx.Graph()
    for sid, (a, b) in ends.items():
        g.add_edge(a, b, sid=sid, length=network.length(sid))
    nodes = sorted(g.nodes)
    rmax = max(r for r, _ in nodes)
    cmax = max(c for _, c in nodes)
    centers = [(rng.uniform(0, rmax), rng.uniform(0, cmax)) for _ in range(n_hotspots)]

    def draw():
        cr, cc = rng.choice(centers)
        r = min(rmax, max(0, round(rng.gauss(cr, spread))))
        c = min(cmax, max(0, round(rng.gauss(cc, spread))))
        return (r, c)

    out = []
    k = 0
    while len(out) < n:
        o, d = draw(), draw()
        if o == d:
            continue
        scale = {e: rng.uniform(1.0, 1.0 + detour) for e in g.edges}
        path = nx.dijkstra_path(g, o, d, weight=lambda u, v, attr: attr["length"] * scale.get((u, v), scale.get((v, u))))
        segs = tuple(g.edges[a, b]["sid"] for a, b in zip(path, path[1:]))
        out.append(Trajectory(segs, 1.0, f"t{k}"))
        k += 1
    return out


def synth_instance(seed: int, rows: int, cols: int, n_trajectories: int, mean_length: float = 6.0,
                   budget: float | None = None, budget_fraction: float = 0.3,
                   utility: UtilitySpec | None = None, unit_cost: float = 1.0,
                   demand: str = "walk", n_hotspots: int = 3, jitter: float = 0.0) -> PlanningInstance:
    """Deterministic grid instance.

    ``demand="walk"`` draws self-avoiding random walks of mean length ``mean_length``;
    ``demand="hotspot"`` routes trips between hotspot-clustered intersections.
    """
    rng = random.Random(seed)
    net, ends = grid_network(rows, cols, rng, unit_cost, jitter=jitter)
    if demand == "walk":
        trajs = random_walks(net, ends, n_trajectories, mean_length, rng)
    elif demand == "hotspot":
        trajs = hotspot_trips(net, ends, n_trajectories, rng, n_hotspots)
    else:
        raise ValueError(f"unknown demand model {demand!r}")
    if budget is None:
        budget = round(budget_fraction * net.total_cost(), 6)
    return build_instance(net, trajs, budget, utility if utility is not None else GU(PowerAlpha(1.1)))
