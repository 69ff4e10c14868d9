"""Command-line interface: fit, predict and bench subcommands.

Artifacts are written atomically (temp file + rename), so a zero exit code
means every requested file is fully on disk.  Exit codes: 0 ok, 2 input
error, 3 infeasible cluster count, 4 degenerate data (duplicated rows).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .bench import TEST_FUNCTIONS, run_benchmark
from .estimators import ClusteredGP
from .exceptions import (
    CsvFormatError,
    DuplicatedPoints,
    InfeasibleK,
    ModelFormatError,
    QOutOfRange,
)
from .model_io import (
    load_model,
    read_x_csv,
    read_xy_csv,
    save_model,
    write_prediction_csv,
    write_trace_csv,
)
from .sem import SemConfig

__all__ = ["main"]

_METHOD_ALIASES = {
    "clustered": "clustered_gp",
    "stationary": "stationary_gp",
    "clustered_gp": "clustered_gp",
    "stationary_gp": "stationary_gp",
}


def _default_threads():
    raw = os.environ.get("CGP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated "
                                         "list of integers")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated "
                                         "list of numbers")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clustergp",
        description="Clustered Gaussian-process emulation for nonstationary "
                    "computer experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a clustered GP to a training CSV")
    fit.add_argument("train", help="training CSV: feature columns then a "
                                   "final column named y")
    group = fit.add_mutually_exclusive_group(required=True)
    group.add_argument("--k", type=int, help="number of clusters")
    group.add_argument("--k-grid", type=_int_list, metavar="LIST",
                       help="comma-separated K grid; the best LOOCV RMSE wins")
    fit.add_argument("--max-iter", type=int, default=100)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--nugget", type=float, default=1e-6)
    fit.add_argument("--ridge", type=float, default=1e-4)
    fit.add_argument("--patience", type=int, default=10)
    fit.add_argument("--threads", type=int, default=_default_threads(),
                     help="worker threads for hyperparameter search "
                          "(default from CGP_THREADS; never changes results)")
    fit.add_argument("--out", default="model.json", help="model file path; "
                     "the fit trace lands next to it as <stem>_trace.csv")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="predict with a saved model")
    pred.add_argument("model", help="model JSON written by fit")
    pred.add_argument("test", help="CSV of inputs; a trailing y column is "
                                   "allowed and ignored for prediction")
    pred.add_argument("--quantiles", type=_float_list, default=[0.025, 0.975],
                      metavar="LIST", help="comma-separated quantile levels")
    pred.add_argument("--out", default="pred.csv")
    pred.set_defaults(func=cmd_predict)

    bench = sub.add_parser("bench", help="run the synthetic benchmark")
    bench.add_argument("--fn", required=True,
                       help="gramacy1d, xiong, montagna, wavy or borehole")
    bench.add_argument("--n", type=int, default=None,
                       help="training size (default: the function's own)")
    bench.add_argument("--ntest", type=int, default=1000)
    bench.add_argument("--methods", default="clustered,stationary",
                       help="comma-separated subset of clustered,stationary")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--k", type=int, default=None,
                       help="cluster count (default: per-function rule)")
    bench.add_argument("--threads", type=int, default=_default_threads())
    bench.add_argument("--out", default="report.csv")
    bench.set_defaults(func=cmd_bench)
    return parser


def cmd_fit(args):
    x, y, _ = read_xy_csv(args.train)
    est = ClusteredGP(
        k=args.k_grid if args.k_grid is not None else args.k,
        max_iter=args.max_iter,
        patience=args.patience,
        seed=args.seed,
        nugget=args.nugget,
        ridge=args.ridge,
        threads=args.threads,
    )
    est.fit(x, y)
    out = Path(args.out)
    save_model(out, est, x)
    trace_path = out.with_name(out.stem + "_trace.csv")
    write_trace_csv(trace_path, est.trace_)
    print(f"chosen K: {est.k_}")
    print(f"best LOOCV RMSE: {est.best_rmse_}")
    print(f"model: {out}")
    print(f"trace: {trace_path}")
    return 0


def cmd_predict(args):
    est = load_model(args.model)
    x, _, names = read_x_csv(args.test)
    d = est.x_min_.shape[0]
    if x.shape[1] != d:
        raise CsvFormatError(
            f"{args.test}: has {x.shape[1]} feature columns, the model "
            f"expects {d}"
        )
    levels = list(args.quantiles)
    for q in levels:
        if not 0.0 < q < 1.0:
            raise QOutOfRange(f"quantile level {q} outside (0, 1)")
    mean, variance = est.predict(x, return_var=True)
    quants = est.predict_quantiles(x, levels)
    write_prediction_csv(args.out, names, x, mean, variance, quants, levels)
    print(f"predictions: {args.out}")
    return 0


def cmd_bench(args):
    methods = []
    for name in args.methods.split(","):
        name = name.strip()
        if name not in _METHOD_ALIASES:
            raise ValueError(
                f"unknown method {name!r}; choose from "
                f"{sorted(set(_METHOD_ALIASES))}"
            )
        methods.append(_METHOD_ALIASES[name])
    if args.fn not in TEST_FUNCTIONS:
        raise ValueError(f"unknown test function {args.fn!r}")
    fn = TEST_FUNCTIONS[args.fn]
    config = SemConfig(seed=args.seed, threads=args.threads)
    reports = run_benchmark(
        fn,
        n=args.n if args.n is not None else fn.default_n,
        n_test=args.ntest,
        methods=tuple(methods),
        config=config,
        seed=args.seed,
        k=args.k,
        out=args.out,
    )
    for r in reports:
        print(
            f"{r.method}: n={r.n} seed={r.seed} rmse={r.rmse} "
            f"fit={r.fit_sec:.2f}s pred={r.pred_sec:.2f}s"
        )
    print(f"report: {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CsvFormatError, ModelFormatError, QOutOfRange, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    except InfeasibleK as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DuplicatedPoints as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
