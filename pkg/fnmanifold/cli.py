import argparse
import logging
import sys
from typing import List, Optional

import orjson

from .distance import epsilon_compute, geodesic_from_direct, pairwise_direct, quadrature_weights
from .embed import METHODS, fit_embedding, make_hyper
from .experiment import REFERENCE_SPACES, ExperimentConfig, delta_report, load_records, run_experiment
from .plotting import render_scatter_svg
from .quality import NEIGHBORHOOD_METRICS, OBJECTIVES, evaluate_embedding
from .synthdata import SETTINGS, generate_setting
from .tooling import (
    JSON_OPTIONS,
    join,
    load_color_csv,
    load_dataset_csv,
    load_embedding,
    load_matrix_csv,
    load_params_csv,
    makedirs,
    save_dataset_csv,
    save_embedding,
    save_matrix_csv,
    save_params_csv,
    write_frame,
    write_json,
)
from .tune import PRESETS, default_grid, grid_search

logger = logging.getLogger(__name__)

METRIC_NAMES = {"dir": "direct", "geo": "geodesic"}


def _generate(args) -> int:
    data, params = generate_setting(args.setting, n=args.n, m=args.m, seed=args.seed)
    outdir = args.outdir or args.setting
    makedirs(outdir)
    save_dataset_csv(data, join(outdir, "data.csv"))
    save_params_csv(params, join(outdir, "params.csv"))
    logger.info(f"Saved {args.setting} to {outdir}")
    return 0


def _points(args):
    if args.params:
        return load_params_csv(args.params).values, "parameter", None
    data = load_dataset_csv(args.input, grid_row=not args.no_grid_row)
    return data.values, "function", data.grid


def _dist(args) -> int:
    points, space, grid = _points(args)
    weights = quadrature_weights(grid) if args.quadrature and grid is not None else None
    d = pairwise_direct(points, weights=weights, space=space)
    if args.metric == "geo":
        d = geodesic_from_direct(d, args.k)
    save_matrix_csv(d, args.out)
    logger.info(f"Saved {METRIC_NAMES[args.metric]} {space}-space distances ({d.n} x {d.n}) to {args.out}")
    return 0


def _embed(args) -> int:
    d = load_matrix_csv(args.dist)
    hyper = make_hyper(args.method, **{k: v for k, v in vars(args).items() if k not in ("method", "seed")})
    emb = fit_embedding(d, hyper, seed=args.seed)
    save_embedding(emb, args.out)
    if args.svg:
        color = load_color_csv(args.color) if args.color else None
        render_scatter_svg(emb, color, args.svg)
    for warning in emb.diagnostics.get("warnings", []):
        logger.warning(warning)
    logger.info(f"Saved {args.method} embedding {emb.coords.shape} to {args.out}")
    return 0


def _eval(args) -> int:
    ref = load_matrix_csv(args.ref, space=args.space)
    emb = load_embedding(args.emb)
    report = evaluate_embedding(ref, emb, m=args.metric, geodesic_k=args.k, weighted=not args.literal_auc)
    if args.curve:
        write_frame(report.curve.frame(), args.curve)
    if args.out:
        write_json(report.to_dict(), args.out)
    sys.stdout.write(orjson.dumps(report.to_dict(), option=JSON_OPTIONS).decode() + "\n")
    return 0


def _tune(args) -> int:
    data = load_dataset_csv(args.data, grid_row=not args.no_grid_row)
    input_d = pairwise_direct(data.values, space="function")
    if args.ref == "parameter":
        if not args.params:
            raise ValueError("--ref parameter needs --params")
        ref_d = pairwise_direct(load_params_csv(args.params).values, space="parameter")
    else:
        ref_d = input_d
    eps_s = epsilon_compute(input_d) if args.method == "diffmap" else None
    grid = default_grid(args.method, input_d.n, eps_s=eps_s, preset=args.grid)
    result = grid_search(
        args.method,
        input_d,
        ref_d,
        objective=args.objective,
        m=args.metric,
        grid=grid,
        geodesic_k=args.geodesic_k,
        seed=args.seed,
        workers=args.workers,
    )
    makedirs(args.outdir)
    write_json(result.to_dict(), join(args.outdir, "tuning.json"))
    write_frame(result.trace_frame(), join(args.outdir, "trace.csv"))
    return 0 if result.to_dict()["n_failed"] == 0 else 1


def _experiment(args) -> int:
    overrides = {
        "settings": args.settings,
        "methods": args.methods,
        "objectives": args.objectives,
        "metrics": args.metrics,
        "spaces": args.spaces,
        "n": args.n,
        "m": args.m,
        "seed": args.seed,
        "grid": args.grid,
        "geodesic_k": args.geodesic_k,
        "workers": args.workers,
        "output": args.output,
        "dataset": args.dataset,
    }
    if args.config:
        cfg = ExperimentConfig.from_toml(args.config, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    records = run_experiment(cfg)
    failed = [record.cell for record in records if record.failed]
    for cell in failed:
        logger.error(f"Failed cell: {cell}")
    return 1 if failed else 0


def _report(args) -> int:
    records = load_records(args.dir)
    for metric in NEIGHBORHOOD_METRICS:
        table = delta_report(records, metric, objective=args.objective)
        sys.stdout.write(f"Delta^{metric} ({args.objective})\n{table.to_string(index=False)}\n\n")
        write_frame(table, join(args.dir, f"delta-{metric}.csv"))
    return 0


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="fnmr", description="Manifold learning for functional data")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Generate a synthetic functional data set")
    p.add_argument("--setting", required=True, choices=list(SETTINGS))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--outdir", help="Output directory for data.csv and params.csv (default: ./<setting>)")
    p.set_defaults(func=_generate)

    p = sub.add_parser("dist", help="Direct or geodesic distance matrix")
    p.add_argument("--input", help="Functional data CSV (first row is the grid)")
    p.add_argument("--params", help="Parameter CSV with a header, instead of --input")
    p.add_argument("--no-grid-row", action="store_true", help="Input CSV has no grid row")
    p.add_argument("--quadrature", action="store_true", help="Trapezoidal weights for non-uniform grids")
    p.add_argument("--metric", choices=NEIGHBORHOOD_METRICS, default="dir")
    p.add_argument("--k", type=int, default=10, help="k-NN size for geodesic distances")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_dist)

    p = sub.add_parser("embed", help="Embed a direct distance matrix")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--dist", required=True, help="Square distance CSV")
    p.add_argument("--out", required=True, help="Embedding CSV; a JSON sidecar is written next to it")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--svg", help="Optional scatter plot path")
    p.add_argument("--color", help="CSV whose first column colors the scatter plot")
    p.add_argument("--k", type=int, help="mds: dimension; isomap: neighbors")
    p.add_argument("--ndim", type=int)
    p.add_argument("--eps-val", dest="eps_val", type=float)
    p.add_argument("--neigen", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--perplexity", type=float)
    p.add_argument("--dims", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--exaggeration", type=float)
    p.add_argument("--n-neighbors", dest="n_neighbors", type=int)
    p.add_argument("--n-components", dest="n_components", type=int)
    p.add_argument("--min-dist", dest="min_dist", type=float)
    p.add_argument("--n-epochs", dest="n_epochs", type=int)
    p.add_argument("--init", choices=["spectral", "random"])
    p.set_defaults(func=_embed)

    p = sub.add_parser("eval", help="Quality of an embedding against a reference distance matrix")
    p.add_argument("--ref", required=True, help="Direct reference distance CSV")
    p.add_argument("--emb", required=True, help="Embedding CSV")
    p.add_argument("--space", choices=REFERENCE_SPACES, default="function")
    p.add_argument("--metric", choices=NEIGHBORHOOD_METRICS, default="dir")
    p.add_argument("--k", type=int, default=10, help="k-NN size for geo neighborhoods")
    p.add_argument("--literal-auc", action="store_true", help="Unweighted AUC numerator")
    p.add_argument("--curve", help="Optional CSV of g, Q_RX, R_NX")
    p.add_argument("--out", help="Optional report JSON")
    p.set_defaults(func=_eval)

    p = sub.add_parser("tune", help="Grid-search one method")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--data", required=True, help="Functional data CSV")
    p.add_argument("--params", help="Parameter CSV for --ref parameter")
    p.add_argument("--no-grid-row", action="store_true")
    p.add_argument("--objective", choices=OBJECTIVES, default="auc")
    p.add_argument("--metric", choices=NEIGHBORHOOD_METRICS, default="dir")
    p.add_argument("--ref", choices=REFERENCE_SPACES, default="function")
    p.add_argument("--grid", choices=PRESETS, default="desk")
    p.add_argument("--geodesic-k", dest="geodesic_k", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-w", "--workers", type=int, default=1, help="Dask workers")
    p.add_argument("-o", "--outdir", required=True)
    p.set_defaults(func=_tune)

    p = sub.add_parser("experiment", help="Run the tuning protocol from a TOML config")
    p.add_argument("-c", "--config", help="TOML config file")
    p.add_argument("--settings", nargs="+")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--objectives", nargs="+")
    p.add_argument("--metrics", nargs="+")
    p.add_argument("--spaces", nargs="+")
    p.add_argument("--dataset", help="External functional data CSV instead of settings")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", choices=PRESETS)
    p.add_argument("--geodesic-k", dest="geodesic_k", type=int)
    p.add_argument("-w", "--workers", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_experiment)

    p = sub.add_parser("report", help="Delta table of a finished experiment")
    p.add_argument("--dir", required=True, help="Experiment output directory")
    p.add_argument("--objective", choices=OBJECTIVES, default="auc")
    p.set_defaults(func=_report)

    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%m/%d/%Y %I:%M:%S %p",
        level=logging.DEBUG if args.verbose else logging.INFO,
    )
    if args.command == "dist" and not (args.input or args.params):
        logger.error("dist needs --input or --params")
        return 2
    try:
        return args.func(args)
    except ValueError as e:
        logger.error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
