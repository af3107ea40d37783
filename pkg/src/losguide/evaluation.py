"""Post-solve metrics, sweeps and result export."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from losguide.config import DEFAULT_WEIGHT_SETS, Weights
from losguide.discretize import NumericalFailure, propagate_nonlinear
from losguide.dynamics import N_STATE, S, SixDofDynamics, VehicleParams
from losguide.los import ViewCone

log = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "scenario", "N", "weights_id", "los_vio", "objective", "iterations", "converged",
               "runtime_s", "max_defect")


@dataclass
class ResultRecord:
    method: str
    scenario: str
    N: int
    weights_id: str
    los_vio: float
    objective: float
    iterations: int
    converged: bool
    runtime_s: float
    max_defect: float
    status: str = ""

    def __post_init__(self):
        if self.los_vio < 0:
            raise ValueError("los_vio must be nonnegative")


def los_vio(dense, keypoints, cone: ViewCone) -> float:
    """Mean over samples of the summed positive LoS residuals."""
    dyn = SixDofDynamics(vehicle=VehicleParams(), cone=cone, keypoints=tuple(keypoints), augmented=False)
    g, _ = dyn.los(dense.x[:, :N_STATE], dense.t)
    return float(np.mean(np.sum(np.maximum(g, 0.0), axis=1)))


def objective_cost(dense, sc) -> float:
    """Time of flight for min-time problems, ``int ||u||_2 dt`` for min-fuel."""
    if sc.objective == "min-time":
        return float(dense.t[-1] - dense.t[0])
    return float(np.trapezoid(np.linalg.norm(dense.u[:, :S], axis=1), dense.t))


def dense_defect(dyn, traj, n_sub: int = 15) -> float:
    """Largest infinity-norm gap between interval propagation and the next node."""
    from losguide.discretize import discretize

    disc = discretize(dyn, traj.x, traj.u, traj.grid, n_sub=n_sub)
    return float(np.max(np.abs(disc.defect[:, :N_STATE])))


def evaluate(sc, traj, log_, weights_id: str = "default", n_prop: int = 1000) -> ResultRecord:
    """Propagate the solution densely from ``x0`` and compute the metrics."""
    dyn = SixDofDynamics.from_scenario(sc, augmented=False)
    try:
        dense = propagate_nonlinear(dyn, traj.x[0, :N_STATE], traj.u, traj.grid, n_dense=n_prop)
        vio = los_vio(dense, sc.keypoints, sc.cone)
        obj = objective_cost(dense, sc)
        defect = dense_defect(dyn, type(traj)(traj.x[:, :N_STATE], traj.u, traj.grid, traj.method))
    except NumericalFailure:
        vio, obj, defect = np.inf, np.nan, np.inf
    return ResultRecord(
        method=traj.method,
        scenario=sc.name,
        N=sc.nodes,
        weights_id=weights_id,
        los_vio=vio,
        objective=obj,
        iterations=log_.n_iterations,
        converged=log_.converged,
        runtime_s=log_.runtime,
        max_defect=defect,
        status=log_.status,
    )


def _run_cell(args):
    from losguide.proxlinear import SolveOptions, solve

    sc, method, weights_id, weights, n_prop, n_sub = args
    sc = sc.with_weights(weights)
    try:
        traj, lg = solve(sc, SolveOptions(method=method, n_sub=n_sub))
    except Exception as exc:  # noqa: BLE001 - failures are data
        log.warning("cell %s/%s/N=%d/%s failed: %s", sc.name, method, sc.nodes, weights_id, exc)
        return ResultRecord(method, sc.name, sc.nodes, weights_id, np.inf, np.nan, 0, False, 0.0, np.inf, "failed")
    return evaluate(sc, traj, lg, weights_id, n_prop)


def run_sweep(sc, grid_sizes, weight_sets=None, methods=("ct", "dt"), jobs: int = 1, n_prop: int = 1000,
              n_sub: int = 15) -> list[ResultRecord]:
    """Solve every (method, N, weight set) cell; records ordered by (method, N, weight id)."""
    weight_sets = DEFAULT_WEIGHT_SETS if weight_sets is None else weight_sets
    if not grid_sizes or not weight_sets or not methods:
        raise ValueError("sweep axes must be nonempty")
    cells = [
        (sc.with_nodes(int(n)), m, wid, weight_sets[wid], n_prop, n_sub)
        for m in methods
        for n in grid_sizes
        for wid in sorted(weight_sets)
    ]
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(c) for c in cells]
    log.info("sweep of %d cells took %.1f s", len(cells), time.perf_counter() - t0)
    return records


def aggregate(records) -> list[dict]:
    """Min/mean/max of los_vio, objective, iterations and runtime per (method, N)."""
    keys = sorted({(r.method, r.N) for r in records})
    out = []
    for method, n in keys:
        sel = [r for r in records if r.method == method and r.N == n]
        row = {"method": method, "N": n, "count": len(sel)}
        for name in ("los_vio", "objective", "iterations", "runtime_s"):
            v = np.array([getattr(r, name) for r in sel], dtype=float)
            row[f"{name}_min"], row[f"{name}_mean"], row[f"{name}_max"] = (float(v.min()), float(v.mean()),
                                                                           float(v.max()))
        out.append(row)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export_results(records, path, fmt: str = "csv", config: dict | None = None) -> Path:
    """Write the record table and its per-(method, N) aggregate.

    CSV puts the records in ``path`` and the aggregate next to it with an
    ``_aggregate`` suffix; JSON holds both (plus ``config``) in one file.
    """
    if not records:
        raise ValueError("no records to export")
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        agg = aggregate(records)
        with path.with_name(path.stem + "_aggregate.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(agg[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(agg)
    elif fmt == "json":
        doc = {"records": [asdict(r) for r in records], "aggregate": aggregate(records)}
        if config is not None:
            doc["config"] = config
        path.write_text(json.dumps(doc, indent=2, default=_json_default))
    else:
        raise ValueError("format must be 'csv' or 'json'")
    return path


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def load_results(path) -> list[ResultRecord]:
    """Read records back from a CSV or JSON export."""
    path = Path(path)
    if path.suffix == ".json":
        return [ResultRecord(**d) for d in json.loads(path.read_text())["records"]]
    types = {f.name: f.type for f in fields(ResultRecord)}
    out = []
    with path.open() as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                kw[k] = int(v) if t == "int" else float(v) if t == "float" else (v == "true") if t == "bool" else v
            out.append(ResultRecord(**kw))
    return out


def weights_by_id(weights_id: str) -> Weights:
    return DEFAULT_WEIGHT_SETS[weights_id]
