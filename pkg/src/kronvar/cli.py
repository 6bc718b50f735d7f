"""Command line entry point.

Subcommands::

    kronvar synth   draw a model and write a stream file
    kronvar ingest  validate a stream file and print its dimensions
    kronvar run     run the estimators on synthetic or file input
    kronvar report  aggregate JSON-lines results into mean/std tables

Exit codes: 0 on success, 2 for malformed input or configuration, 3 when
the online solver aborts.
"""

import argparse
import csv
import json
import sys

from .basis import GraphDims
from .harness import (RunConfig, SchemaError, SolverAbort, load_model, read_csv,
                      read_jsonl, run_experiment, run_stream, save_model, summarize,
                      write_csv)
from .model import random_true_model, simulate

EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER = 0, 2, 3


def _config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise SchemaError("config file must hold a JSON object")
    overrides = {
        "n_nodes": args.nodes, "n_features": args.features, "period": args.period,
        "t_total": args.steps, "estimators": args.estimators, "mode": args.mode,
        "significance": args.significance, "lam0": args.lam0, "t0": args.t0,
        "eta": args.eta, "replications": args.replications, "seed": args.seed,
        "noise_scale": args.noise_scale, "edge_density": args.edge_density,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.use_f:
        cfg["use_f"] = True
    if args.diagnostics:
        cfg["diagnostics"] = True
    try:
        return RunConfig.from_dict(cfg)
    except TypeError as exc:
        raise SchemaError(str(exc)) from exc


def cmd_synth(args):
    dims = GraphDims(args.nodes, args.features, args.period)
    model = random_true_model(dims, edge_density=args.edge_density,
                              noise_scale=args.noise_scale, target_norm=args.target_norm,
                              seed=args.seed)
    X = simulate(model, args.steps, seed=None if args.seed is None else args.seed + 1)
    write_csv(args.out, X, dims, layout=args.layout)
    if args.model_out:
        save_model(args.model_out, model)
    print(json.dumps({"stream": args.out, "N": dims.n_nodes, "F": dims.n_features,
                      "M": dims.period, "t_total": args.steps}))
    return EXIT_OK


def cmd_ingest(args):
    X, (N, F) = read_csv(args.path, args.nodes, args.features)
    print(json.dumps({"N": N, "F": F, "t_total": X.shape[0] - 1}))
    return EXIT_OK


def cmd_run(args):
    cfg = _config(args)
    out = open(args.out, "w") if args.out else sys.stdout

    def emit(rec):
        out.write(json.dumps(rec) + "\n")

    try:
        if args.input:
            X, (N, F) = read_csv(args.input, cfg.n_nodes, cfg.n_features)
            if (N, F) != (cfg.n_nodes, cfg.n_features):
                raise SchemaError(f"stream has N={N}, F={F}, config says "
                                  f"N={cfg.n_nodes}, F={cfg.n_features}")
            truth = load_model(args.model) if args.model else None
            res = run_stream(X, cfg, truth, emit=emit)
            summary = [{"replication": 0, "final": res.final, "trend_error": res.trend_error}]
        else:
            results = run_experiment(cfg, emit=emit)
            summary = [{"replication": r, "final": res.final, "trend_error": res.trend_error}
                       for r, (_, res) in enumerate(results)]
    finally:
        if out is not sys.stdout:
            out.close()
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump({"config": cfg.to_dict(), "replications": summary}, fh, indent=2)
    return EXIT_OK


def cmd_report(args):
    records = []
    for path in args.paths:
        records += read_jsonl(path)
    rows = summarize(records, args.key)
    w = csv.DictWriter(sys.stdout, fieldnames=["estimator", "t", "mean", "std", "n"])
    w.writeheader()
    for r in rows:
        if args.every and r["t"] % args.every:
            continue
        w.writerow(r)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kronvar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="draw a model and write a stream")
    s.add_argument("--nodes", type=int, required=True)
    s.add_argument("--features", type=int, required=True)
    s.add_argument("--period", type=int, default=1)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--edge-density", type=float, default=0.2)
    s.add_argument("--noise-scale", type=float, default=0.4)
    s.add_argument("--target-norm", type=float, default=0.8)
    s.add_argument("--layout", choices=["long", "wide"], default="long")
    s.add_argument("--out", required=True)
    s.add_argument("--model-out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="validate a stream file")
    s.add_argument("path")
    s.add_argument("--nodes", type=int)
    s.add_argument("--features", type=int)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("run", help="run the estimators")
    s.add_argument("--config", help="JSON file with RunConfig fields")
    s.add_argument("--input", help="stream CSV; synthetic data when omitted")
    s.add_argument("--model", help="true model JSON for error metrics on file input")
    s.add_argument("--nodes", type=int)
    s.add_argument("--features", type=int)
    s.add_argument("--period", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--estimators", choices=["lowdim", "highdim", "both"])
    s.add_argument("--mode", choices=["stationary", "augmented"])
    s.add_argument("--significance", type=float)
    s.add_argument("--use-f", action="store_true")
    s.add_argument("--lam0", type=float)
    s.add_argument("--t0", type=int)
    s.add_argument("--eta", type=float)
    s.add_argument("--replications", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise-scale", type=float)
    s.add_argument("--edge-density", type=float)
    s.add_argument("--diagnostics", action="store_true",
                   help="add the optimality residual to online Lasso records")
    s.add_argument("--out", help="JSON-lines output (stdout by default)")
    s.add_argument("--summary", help="write a JSON summary of final values")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="aggregate JSON-lines results")
    s.add_argument("paths", nargs="+")
    s.add_argument("--key", default="rmsd")
    s.add_argument("--every", type=int, default=0, help="keep only t divisible by this")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
