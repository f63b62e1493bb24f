"""Command-line front end.

Config files are flat ``key = value`` lines (``#`` comments); command-line flags
override file values and unknown keys are rejected. Exit codes: 0 success,
1 input/validation error, 2 infeasible, 3 time limit reached with an incumbent.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .model import AC, GU, ConfigurationError, Linear, PowerAlpha, build_instance, evaluate_plan
from .model import IngestError

log = logging.getLogger("bikelane")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_TIME_LIMIT = 0, 1, 2, 3

MODELS = ("ac", "gu", "gu-choice")
ALGOS = ("exact", "lagrangian", "greedy")
CONTINUITY = ("power", "linear")


@dataclass(frozen=True)
class RunConfig:
    network: str | None = None
    trajectories: str | None = None
    stock: str | None = None
    routes: str | None = None
    model: str = "gu"
    algo: str = "lagrangian"
    f: str = "power"
    lam: float = 1.0
    alpha: float = 1.1
    length_weighted: bool = False
    budget_km: float | None = None
    budget: float | None = None  # currency; overrides budget_km
    unit_cost: float = 1.0
    eps: float = 1e-4
    K: int = 20
    p_min: float = 1e-4
    mip_gap: float = 1e-6
    time_limit: float | None = None
    widen: bool = True
    node_limit: int = 200  # restricted branch-and-bound nodes (lagrangian)
    seed: int = 0
    out: str = "out"
    record_time: bool = False

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}")
        if self.algo not in ALGOS:
            raise ConfigurationError(f"algo must be one of {ALGOS}")
        if self.f not in CONTINUITY:
            raise ConfigurationError(f"f must be one of {CONTINUITY}")
        if self.lam < 0:
            raise ConfigurationError("lam must be >= 0")
        if self.alpha < 1:
            raise ConfigurationError("alpha must be >= 1")
        if self.unit_cost <= 0:
            raise ConfigurationError("unit_cost must be > 0")
        if not self.eps > 0:
            raise ConfigurationError("eps must be > 0")
        if self.K < 2:
            raise ConfigurationError("K must be >= 2")
        if not 0 < self.p_min < 1:
            raise ConfigurationError("p_min must lie in (0, 1)")
        if self.node_limit < 0:
            raise ConfigurationError("node_limit must be >= 0")
        if self.mip_gap < 0:
            raise ConfigurationError("mip_gap must be >= 0")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ConfigurationError("time_limit must be > 0")
        if self.budget is None and self.budget_km is None:
            raise ConfigurationError("one of budget or budget_km is required")
        if self.budget_currency < 0:
            raise ConfigurationError("budget must be >= 0")
        if self.model == "gu-choice" and self.algo != "exact":
            raise ConfigurationError("model gu-choice is solved by algo=exact only")
        return self

    @property
    def budget_currency(self) -> float:
        if self.budget is not None:
            return self.budget
        return self.budget_km * 1000.0 * self.unit_cost

    def utility(self):
        if self.model == "ac":
            return AC(self.lam)
        f = PowerAlpha(self.alpha) if self.f == "power" else Linear(self.lam)
        return GU(f, self.length_weighted)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, text):
    if key not in _FIELDS:
        raise ConfigurationError(f"unknown config key {key!r}")
    if text is None or not isinstance(text, str):
        return text
    kind = str(_FIELDS[key].type)
    if text.lower() in ("", "none") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigurationError(f"config key {key}: {exc}") from None
    return text


def read_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k in out:
                raise ConfigurationError(f"{path}:{lineno}: duplicate key {k!r}")
            out[k] = _coerce(k, v)
    return out


def make_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    values = read_config_file(file_path) if file_path else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, v)
    return RunConfig(**values).validate()


# --- solving --------------------------------------------------------------------------

def load_instance(cfg: RunConfig):
    from .ingest import parse_network, parse_trajectories

    missing = [k for k in ("network", "trajectories") if getattr(cfg, k) is None]
    if missing:
        raise ConfigurationError(f"missing input: {', '.join(missing)}")
    net = parse_network(cfg.network, cfg.unit_cost)
    trajs = parse_trajectories(cfg.trajectories)
    return build_instance(net, trajs, cfg.budget_currency, cfg.utility())


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def solve_config(cfg: RunConfig):
    """Run one solve; returns (exit code, plan record, instance, plan, wall time). Raises on input errors."""
    from . import solvers

    if cfg.model == "gu-choice" and cfg.routes is None:
        raise ConfigurationError("missing input: routes (model gu-choice needs a route-set file)")
    inst = load_instance(cfg)
    t0 = time.monotonic()
    status = "optimal"
    if cfg.model == "gu-choice":
        from .choice import parse_routes

        ctx = parse_routes(cfg.routes, inst.network)
        plan = solvers.solve_choice(inst, ctx, cfg.K, cfg.p_min, cfg.mip_gap, cfg.time_limit)
        status = plan.provenance["status"]
    elif cfg.algo == "exact":
        plan = solvers.solve_exact(inst, "ac" if cfg.model == "ac" else "gu", cfg.mip_gap, cfg.time_limit)
        status = plan.provenance["status"]
    elif cfg.algo == "lagrangian":
        plan, _ = solvers.gu_lag(inst, cfg.eps, cfg.time_limit, widen=cfg.widen,
                                  node_limit=cfg.node_limit)
        status = plan.provenance.get("milp_status", "optimal")
        if status == "optimal":
            status = "certified" if plan.gap is not None and plan.gap <= cfg.eps else "heuristic"
    else:
        plan = solvers.greedy(inst)
        status = "heuristic"
    wall = time.monotonic() - t0
    net = inst.network
    keep = ("evaluations", "exit", "u_star", "restricted", "nodes", "approx_value", "approx_bound",
            "exact_value", "strong_duality_residual", "milp_nodes")
    record = {
        "selected": net.sort_ids(plan.selected),
        "n_selected": len(plan.selected),
        "cost": plan.cost,
        "budget": inst.budget,
        "objective": plan.objective,
        "bound": _clean(plan.bound),
        "gap": _clean(plan.gap),
        "feasible": plan.feasible,
        "status": status,
        "solver": plan.provenance.get("solver"),
        "details": {k: _clean(plan.provenance[k]) for k in keep if k in plan.provenance},
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out", "record_time")},
    }
    if cfg.record_time:
        record["wall_time"] = wall
    if status == "infeasible" or not plan.feasible:
        code = EXIT_INFEASIBLE
    elif status == "interrupted":
        code = EXIT_TIME_LIMIT
    else:
        code = EXIT_OK
    return code, record, inst, plan, wall


def write_outputs(outdir: Path, record: dict, inst, plan, wall: float):
    from .metrics import topology, write_reports_csv

    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "plan.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_reports_csv(outdir / "report.csv", [topology(inst, plan)], ["plan"])
    (outdir / "timing.json").write_text(json.dumps({"wall_time": wall}) + "\n", encoding="utf-8")


def cmd_solve(cfg: RunConfig) -> int:
    code, record, inst, plan, wall = solve_config(cfg)
    write_outputs(Path(cfg.out), record, inst, plan, wall)
    print(f"{record['status']}: objective={record['objective']:.6g} cost={record['cost']:.6g} "
          f"gap={record['gap']} -> {cfg.out}")
    return code


# --- sweep ------------------------------------------------------------------------------

def parse_grid(specs) -> list[dict]:
    """``key=v1,v2`` items; the cartesian product with duplicates removed, in first-seen order."""
    axes = []
    for item in specs:
        if "=" not in item:
            raise ConfigurationError(f"grid item {item!r} is not key=v1,v2,...")
        k, vals = item.split("=", 1)
        k = k.strip()
        values = [_coerce(k, v.strip()) for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigurationError(f"grid axis {k!r} is empty")
        axes.append((k, list(dict.fromkeys(values))))
    if not axes:
        raise ConfigurationError("grid is empty")
    cells, seen = [], set()
    for combo in itertools.product(*(v for _, v in axes)):
        cell = dict(zip((k for k, _ in axes), combo))
        key = tuple(sorted(cell.items()))
        if key not in seen:
            seen.add(key)
            cells.append(cell)
    return cells


def cell_name(cell: dict) -> str:
    return "_".join(f"{k}={v}" for k, v in cell.items()).replace("/", "-")


SWEEP_COLUMNS = ("cell", "model", "algo", "status", "exit_code", "objective", "bound", "gap", "cost",
                 "n_lanes", "continuous_pairs", "mean_connections", "mean_run_size", "max_run_size",
                 "coverage_ratio", "strict_coverage_ratio", "error")


def _run_cell(args):
    base, cell, root = args
    from .metrics import topology

    name = cell_name(cell)
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row["cell"] = name
    try:
        cfg = replace(base, **cell, out=str(Path(root) / name)).validate()
        row.update(model=cfg.model, algo=cfg.algo)
        code, record, inst, plan, wall = solve_config(cfg)
        write_outputs(Path(cfg.out), record, inst, plan, wall)
        rep = topology(inst, plan)
        row.update(status=record["status"], exit_code=code, objective=record["objective"],
                   bound=record["bound"], gap=record["gap"], cost=record["cost"], **asdict(rep))
        if code == EXIT_TIME_LIMIT:
            row["status"] = "Interrupted"
    except Exception as exc:  # per-cell failures are recorded and the sweep continues
        row.update(status="error", exit_code=EXIT_ERROR, error=f"{type(exc).__name__}: {exc}")
        wall = None
    return row, wall


def cmd_sweep(base: RunConfig, grid, jobs: int = 1) -> int:
    cells = parse_grid(grid)
    root = Path(base.out)
    root.mkdir(parents=True, exist_ok=True)
    work = [(base, c, str(root)) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, work))
    else:
        results = [_run_cell(w) for w in work]
    with open(root / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row, _ in results:
            w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v)) for k, v in row.items()})
    with open(root / "sweep_timing.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cell", "wall_time"))
        for row, wall in results:
            w.writerow((row["cell"], "" if wall is None else repr(wall)))
    failed = sum(1 for row, _ in results if row["status"] == "error")
    print(f"{len(cells)} cells, {failed} failed -> {root / 'sweep.csv'}")
    return EXIT_OK


# --- data commands ----------------------------------------------------------------------------

def cmd_synth(a) -> int:
    from .ingest import synth_instance, write_network, write_trajectories

    inst = synth_instance(a.seed, a.rows, a.cols, a.n, a.mean_length)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_network(inst.network, out / "network.txt")
    write_trajectories(inst.trajectories, out / "trajectories.txt")
    print(f"{len(inst.network)} segments, {len(inst.trajectories)} trajectories -> {out}")
    return EXIT_OK


def cmd_ingest(a) -> int:
    from .ingest import parse_network, parse_trajectories, write_network, write_trajectories

    net = parse_network(a.network, a.unit_cost)
    trajs = parse_trajectories(a.trajectories)
    inst = build_instance(net, trajs, 0.0, GU(PowerAlpha(1.1)))
    summary = {"segments": len(net), "neighbor_pairs": len(net.neighbors), "trajectories": len(trajs),
               "longest_trajectory": inst.stats.longest_trajectory, "total_cost": inst.stats.total_cost}
    print(json.dumps(summary, sort_keys=True))
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        write_network(net, out / "network.txt")
        write_trajectories(trajs, out / "trajectories.txt")
    return EXIT_OK


def cmd_decensor(a) -> int:
    from .ingest import decensor, parse_stock, parse_trajectories, write_trajectories

    trajs = parse_trajectories(a.trajectories)
    obs = parse_stock(a.stock)
    weighted, rep = decensor(trajs, obs, a.horizon, a.threshold, a.lenient)
    write_trajectories(weighted, a.out)
    report = {
        "horizon_days": rep.horizon_days,
        "missing_cells": rep.missing_cells,
        "dropped": rep.dropped,
        "cells": [{"neighborhood": n, "period": p, "stockout_days": rep.stockout_days[n, p],
                   "weight": rep.weights[n, p]} for n, p in sorted(rep.weights)],
    }
    Path(str(a.out) + ".report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"{len(weighted)} weighted trajectories, {len(rep.dropped)} dropped -> {a.out}")
    return EXIT_OK


def _read_plan(path) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "selected" not in data:
        raise IngestError(f"{path}: no 'selected' list")
    return data["selected"]


def cmd_metrics(a) -> int:
    from .ingest import parse_network, parse_trajectories
    from .metrics import topology, tradeoff_table, write_reports_csv, write_tradeoff_csv

    net = parse_network(a.network)
    inst = build_instance(net, parse_trajectories(a.trajectories), 0.0, GU(PowerAlpha(1.1)))
    reports = [topology(inst, evaluate_plan(inst, _read_plan(p)).selected) for p in a.plans]
    labels = [str(p) for p in a.plans]
    write_reports_csv(a.out, reports, labels)
    if a.tradeoff:
        rows = tradeoff_table(reports[0], reports[1:])
        write_tradeoff_csv(a.tradeoff, rows, labels[1:])
    print(f"{len(reports)} reports -> {a.out}")
    return EXIT_OK


def export_geojson(network, selected) -> dict:
    selected = set(selected)
    feats = []
    for s in network.segments:
        geom = None
        if s.geometry:
            geom = {"type": "LineString", "coordinates": [[x, y] for x, y in s.geometry]}
        else:
            log.warning("segment %s has no geometry; emitted without coordinates", s.id)
        feats.append({"type": "Feature", "geometry": geom,
                      "properties": {"id": s.id, "selected": s.id in selected, "length_m": s.length_m}})
    return {"type": "FeatureCollection", "features": feats}


def cmd_export(a) -> int:
    from .ingest import parse_network

    net = parse_network(a.network)
    sel = _read_plan(a.plan)
    unknown = [s for s in sel if s not in net]
    if unknown:
        raise IngestError(f"plan references unknown segments: {unknown[:5]}")
    Path(a.out).write_text(json.dumps(export_geojson(net, sel)) + "\n", encoding="utf-8")
    print(f"{len(sel)} selected of {len(net)} -> {a.out}")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------------------

def _add_run_options(p):
    p.add_argument("--config", help="flat key = value file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None, help=f"overrides config key {f.name}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bikelane", description="Plan bike-lane networks from trajectories.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic grid instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=6)
    p.add_argument("--cols", type=int, default=6)
    p.add_argument("--n", type=int, default=300, help="number of trajectories")
    p.add_argument("--mean-length", type=float, default=6.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="parse and validate network + trajectory files")
    p.add_argument("--network", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--unit-cost", type=float, default=1.0)
    p.add_argument("--out")

    p = sub.add_parser("decensor", help="reweight trajectories by stock-out-free days")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--stock", required=True)
    p.add_argument("--horizon", type=int, required=True, help="days in the observation horizon")
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--lenient", action="store_true", help="unobserved cells are not stock-outs")
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="solve one configuration")
    _add_run_options(p)

    p = sub.add_parser("sweep", help="solve a parameter grid")
    _add_run_options(p)
    p.add_argument("--grid", nargs="+", required=True, metavar="KEY=V1,V2")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("metrics", help="topology report of plans (first plan is the trade-off baseline)")
    p.add_argument("--network", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--plans", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tradeoff")

    p = sub.add_parser("export", help="GeoJSON of a plan")
    p.add_argument("--network", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("geojson",), default="geojson")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if a.command in ("solve", "sweep"):
            overrides = {f.name: getattr(a, f.name) for f in fields(RunConfig)}
            if a.command == "sweep":
                # grid axes may supply required keys, so validate per cell
                values = read_config_file(a.config) if a.config else {}
                values.update({k: _coerce(k, v) for k, v in overrides.items() if v is not None})
                if a.jobs < 1:
                    raise ConfigurationError("--jobs must be >= 1")
                return cmd_sweep(RunConfig(**values), a.grid, a.jobs)
            return cmd_solve(make_config(a.config, overrides))
        return {"synth": cmd_synth, "ingest": cmd_ingest, "decensor": cmd_decensor,
                "metrics": cmd_metrics, "export": cmd_export}[a.command](a)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
