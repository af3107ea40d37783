"""Command-line entry point.

Exit codes: 0 success (converged), 2 iteration cap reached (or a usage
error reported by argparse), 1 any other error. Machine-readable output
goes to stdout or ``--out``; log lines go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from losguide import evaluation, scenarios
from losguide.config import DEFAULT_WEIGHT_SETS, Weights
from losguide.discretize import TimeGrid, propagate_nonlinear
from losguide.dynamics import N_STATE, SixDofDynamics
from losguide.proxlinear import SolveOptions, Trajectory, solve

log = logging.getLogger("losguide")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2
BUILTIN = {"cinematography": scenarios.cinematography_default, "relative-nav": scenarios.relative_nav_default}
_WEIGHT_KEYS = {"obj": "objective", "tr": "trust_region", "vc": "virtual_control", "vb": "virtual_buffer",
                "licq": "eps_licq"}


class CliError(Exception):
    pass


def parse_weights(spec: str | None, base: Weights) -> tuple[str, Weights]:
    """A named weight set or inline ``obj=1,tr=5,...`` overrides on ``base``."""
    if spec is None:
        return "default", base
    if spec in DEFAULT_WEIGHT_SETS:
        return spec, DEFAULT_WEIGHT_SETS[spec]
    try:
        kw = {}
        for part in spec.split(","):
            k, v = part.split("=")
            kw[_WEIGHT_KEYS.get(k.strip(), k.strip())] = float(v)
        return spec, replace(base, **kw)
    except (ValueError, TypeError) as e:
        raise CliError(f"--weights: expected a set id ({', '.join(DEFAULT_WEIGHT_SETS)}) or k=v pairs: {e}") from e


def load(args) -> scenarios.Scenario:
    name = args.scenario
    if name in BUILTIN:
        sc = BUILTIN[name]()
    else:
        path = Path(name)
        if not path.exists():
            raise CliError(f"scenario file not found: {path}")
        sc = scenarios.load_scenario(path)
    if getattr(args, "nodes", None) and isinstance(args.nodes, int):
        sc = sc.with_nodes(args.nodes)
    return sc


def _write(doc, out):
    text = json.dumps(doc, indent=2, default=_jsonable)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"not serializable: {type(v).__name__}")


def cmd_solve(args) -> int:
    sc = load(args)
    wid, w = parse_weights(args.weights, sc.weights)
    sc = sc.with_weights(w)
    opts = SolveOptions(method=args.method, n_sub=args.n_sub, n_dense=args.n_prop)
    traj, slog = solve(sc, opts)
    rec = evaluation.evaluate(sc, traj, slog, wid, n_prop=args.n_prop)
    dyn = SixDofDynamics.from_scenario(sc, augmented=False)
    dense = propagate_nonlinear(dyn, traj.x[0, :N_STATE], traj.u, traj.grid, n_dense=args.n_prop)
    doc = {
        "scenario": scenarios.to_dict(sc),
        "options": asdict(opts),
        "metrics": asdict(rec),
        "log": slog.as_dict(),
        "nodes": {"tau": traj.grid.tau, "t": traj.t, "x": traj.x, "u": traj.u},
        "dense": {"tau": dense.tau, "t": dense.t, "x": dense.x, "u": dense.u},
    }
    _write(doc, args.out)
    log.info("%s %s: %s after %d iterations, los_vio=%.3e objective=%.4f", sc.name, args.method, slog.status,
             slog.n_iterations, rec.los_vio, rec.objective)
    if slog.converged:
        return EXIT_OK
    return EXIT_MAX_ITER if slog.status == "max-iterations" else EXIT_ERROR


def cmd_sweep(args) -> int:
    sc = load(args)
    grids = [int(n) for n in args.nodes.split(",") if n.strip()] if args.nodes else []
    if not grids:
        raise CliError("--nodes: give at least one grid size, e.g. --nodes 22,44")
    if args.weights:
        weight_sets = dict(parse_weights(s, sc.weights) for s in args.weights.split(";"))
    else:
        weight_sets = DEFAULT_WEIGHT_SETS
    methods = (args.method,) if args.method else ("ct", "dt")
    records = evaluation.run_sweep(sc, grids, weight_sets, methods, jobs=args.jobs, n_prop=args.n_prop,
                                   n_sub=args.n_sub)
    config = {"scenario": scenarios.to_dict(sc), "grids": grids, "methods": list(methods),
              "weights": {k: v.as_dict() for k, v in weight_sets.items()}}
    if args.out:
        evaluation.export_results(records, args.out, args.format, config=config)
    elif args.format == "json":
        _write({"records": [asdict(r) for r in records], "aggregate": evaluation.aggregate(records),
                "config": config}, None)
    else:
        sys.stdout.write(",".join(evaluation.CSV_COLUMNS) + "\n")
        for r in records:
            sys.stdout.write(",".join(evaluation._fmt(getattr(r, c)) for c in evaluation.CSV_COLUMNS) + "\n")
    return EXIT_OK


def cmd_propagate(args) -> int:
    path = Path(args.solution)
    if not path.exists():
        raise CliError(f"solution file not found: {path}")
    doc = json.loads(path.read_text())
    sc = scenarios.from_dict(doc["scenario"])
    x = np.asarray(doc["nodes"]["x"], dtype=float)
    u = np.asarray(doc["nodes"]["u"], dtype=float)
    grid = TimeGrid(len(u))
    dyn = SixDofDynamics.from_scenario(sc, augmented=False)
    dense = propagate_nonlinear(dyn, x[0, :N_STATE], u, grid, n_dense=args.n_prop)
    traj = Trajectory(x[:, :N_STATE], u, grid, doc["log"]["method"])
    out = {
        "los_vio": evaluation.los_vio(dense, sc.keypoints, sc.cone),
        "objective": evaluation.objective_cost(dense, sc),
        "max_defect": evaluation.dense_defect(dyn, traj, args.n_sub),
        "dense": {"tau": dense.tau, "t": dense.t, "x": dense.x, "u": dense.u},
    }
    _write(out, args.out)
    return EXIT_OK


def compare_tables(ct, dt) -> dict:
    """Mean-value ratios DT/CT of los_vio, runtime and iterations."""
    names = {r.scenario for r in ct} | {r.scenario for r in dt}
    if len(names) > 1:
        raise CliError(f"tables describe different scenarios: {sorted(names)}")

    def mean(rs, k):
        return float(np.mean([getattr(r, k) for r in rs]))

    out = {"scenario": names.pop() if names else None}
    for k in ("los_vio", "runtime_s", "iterations"):
        a, b = mean(ct, k), mean(dt, k)
        out[k] = {"ct": a, "dt": b, "ratio": (b / a) if a != 0 else (1.0 if b == 0 else float("inf"))}
    return out


def cmd_compare(args) -> int:
    if args.tables:
        if len(args.tables) > 2:
            raise CliError("compare takes one table (split by method) or two (CT first)")
        for t in args.tables:
            if not Path(t).exists():
                raise CliError(f"results file not found: {t}")
        tables = [evaluation.load_results(t) for t in args.tables]
        if len(tables) == 1:
            ct = [r for r in tables[0] if r.method == "ct"]
            dt = [r for r in tables[0] if r.method == "dt"]
        else:
            ct, dt = tables
    elif args.scenario:
        sc = load(args)
        wid, w = parse_weights(args.weights, sc.weights)
        sc = sc.with_weights(w)
        recs = evaluation.run_sweep(sc, [sc.nodes], {wid: w}, ("ct", "dt"), n_prop=args.n_prop, n_sub=args.n_sub)
        ct, dt = recs[:1], recs[1:]
    else:
        raise CliError("compare needs result tables or --scenario")
    if not ct or not dt:
        raise CliError("both methods need at least one record")
    _write(compare_tables(ct, dt), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="losguide", description="Line-of-sight guidance by successive convexification.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more log detail (stderr)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, nodes_type=int):
        sp.add_argument("--scenario", default=None,
                        help=f"scenario JSON file or a builtin name ({', '.join(BUILTIN)})")
        sp.add_argument("--nodes", type=nodes_type, default=None)
        sp.add_argument("--weights", default=None, help="weight set id or inline k=v list (obj, tr, vc, vb, licq)")
        sp.add_argument("--out", default=None)
        sp.add_argument("--n-prop", type=int, default=1000, help="dense propagation samples")
        sp.add_argument("--n-sub", type=int, default=15, help="RK4 substeps per interval in discretization")
        sp.add_argument("--seedless", action="store_true", help="accepted for compatibility; nothing is random")

    s = sub.add_parser("solve", help="solve one scenario")
    common(s)
    s.add_argument("--method", choices=("ct", "dt"), default="ct")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="grid-size and weight sweep")
    common(s, nodes_type=str)
    s.add_argument("--method", choices=("ct", "dt"), default=None, help="restrict to one method")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("propagate", help="re-propagate a saved solution densely")
    s.add_argument("solution")
    s.add_argument("--out", default=None)
    s.add_argument("--n-prop", type=int, default=1000)
    s.add_argument("--n-sub", type=int, default=15)
    s.set_defaults(func=cmd_propagate)

    s = sub.add_parser("compare", help="CT vs DT ratios from result tables or a fresh solve")
    common(s)
    s.add_argument("tables", nargs="*", help="one table with both methods, or CT table then DT table")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("solve", "sweep") and not args.scenario:
        parser.error("--scenario is required")
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    # restored on exit so in-process callers keep their own logging setup
    previous = log.level
    log.setLevel((logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)])
    try:
        return args.func(args)
    except (CliError, scenarios.ScenarioError, ValueError, OSError) as e:
        log.error("%s", e)
        return EXIT_ERROR
    finally:
        log.setLevel(previous)


if __name__ == "__main__":
    sys.exit(main())
