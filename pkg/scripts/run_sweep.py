"""Run the grid x weight sweep for one scenario and write the results table.

Examples
--------
    python scripts/run_sweep.py relative-nav --nodes 22 44 88 132 --out results/nav.csv
    python scripts/run_sweep.py cinematography --nodes 10 20 40 80 --default-weights-only
"""

import argparse
import logging
import pathlib

from losguide import DEFAULT_WEIGHT_SETS, cinematography_default, load_scenario, relative_nav_default
from losguide.evaluation import aggregate, export_results, run_sweep

BUILTIN = {"relative-nav": relative_nav_default, "cinematography": cinematography_default}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", help="builtin name or scenario JSON file")
    ap.add_argument("--nodes", type=int, nargs="+", default=None)
    ap.add_argument("--methods", nargs="+", default=["ct", "dt"], choices=["ct", "dt"])
    ap.add_argument("--default-weights-only", action="store_true")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=pathlib.Path, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    sc = BUILTIN[args.scenario]() if args.scenario in BUILTIN else load_scenario(args.scenario)
    weights = {"default": sc.weights} if args.default_weights_only else DEFAULT_WEIGHT_SETS
    records = run_sweep(sc, args.nodes or [sc.nodes], weights, methods=tuple(args.methods), jobs=args.jobs)
    out = args.out or pathlib.Path("results") / f"{sc.name}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    export_results(records, out, config={"scenario": sc.name, "grids": args.nodes, "weights": sorted(weights)})
    for row in aggregate(records):
        print(f"{row['method']:>3} N={row['N']:<4} los_vio mean={row['los_vio_mean']:.3e} "
              f"iterations mean={row['iterations_mean']:.1f} runtime mean={row['runtime_s_mean']:.2f}s")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
