"""Command-line interface: ``rdglobal {test-het,test-density,simulate,project}``.

Exit codes: 0 on success, 2 on usage, configuration or data errors, and 3
on numerical failures.  ``--format records`` writes one JSON object per
line with sorted keys, so equal seeds give byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .data import read_csv, write_csv
from .errors import ConfigurationError, DataError, NumericalError
from .forest_density import DensityParams
from .forest_regression import ForestParams
from .geometry import read_boundary_file
from .global_test import DensityTestParams, HetParams, density_test, heterogeneity_test, make_plan
from .simulation import DGP_NAMES, DgpSpec, McConfig, run_monte_carlo

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
MIN_BOOTSTRAP = 100


def _columns(text: str) -> list[str]:
    cols = [c.strip() for c in text.split(",") if c.strip()]
    if not cols:
        raise argparse.ArgumentTypeError("need at least one column name")
    return cols


def _inference_flags(p: argparse.ArgumentParser):
    p.add_argument("--folds", "-K", type=int, default=2, help="cross-fitting folds (default 2)")
    p.add_argument("--splits", "-S", type=int, default=1, help="repeated splits (default 1)")
    p.add_argument("--bootstrap", "-B", type=int, default=999, help="multiplier draws (default 999)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--trees", type=int, default=None, help="trees per forest")


def _io_flags(p: argparse.ArgumentParser):
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("table", "records"), default="table")


def _data_flags(p: argparse.ArgumentParser, outcome: bool):
    p.add_argument("--data", required=True, help="headered CSV")
    p.add_argument("--boundary", required=True, help="boundary file")
    p.add_argument("--x-cols", required=True, type=_columns, help="comma-separated running variables")
    if outcome:
        p.add_argument("--outcome-col", required=True, help="outcome column")
    p.add_argument(
        "--standardize",
        action="store_true",
        help="divide running variables by their SD before projection; the boundary must be in standardized units",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdglobal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    het = sub.add_parser("test-het", help="test for any CEF discontinuity along the boundary")
    _data_flags(het, outcome=True)
    _inference_flags(het)
    het.add_argument("--min-leaf", type=int, default=None)
    het.add_argument("--h-plus", type=float, default=None, help="fixed treated-side bandwidth")
    het.add_argument("--h-minus", type=float, default=None, help="fixed control-side bandwidth")
    _io_flags(het)

    dens = sub.add_parser("test-density", help="test for a running-variable density discontinuity")
    _data_flags(dens, outcome=False)
    _inference_flags(dens)
    dens.add_argument("--depth", type=int, default=None, help="partition-tree depth")
    dens.add_argument("--h", type=float, default=None, help="fixed KDE bandwidth")
    _io_flags(dens)

    sim = sub.add_parser("simulate", help="Monte Carlo rejection rates on a named design")
    sim.add_argument("--dgp", required=True, help=f"one of {', '.join(DGP_NAMES)}")
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--replications", "-R", type=int, default=500)
    sim.add_argument("--noise-sd", type=float, default=None)
    sim.add_argument("--test", choices=("auto", "heterogeneity", "density", "distance_rd"), default="auto")
    sim.add_argument("--oracle", action="store_true", help="supply the true sign")
    sim.add_argument("--jobs", type=int, default=1, help="parallel replications (needs joblib)")
    _inference_flags(sim)
    _io_flags(sim)

    proj = sub.add_parser("project", help="signed distance, nearest boundary point and side per row")
    proj.add_argument("--data", required=True)
    proj.add_argument("--boundary", required=True)
    proj.add_argument("--x-cols", required=True, type=_columns)
    proj.add_argument("--standardize", action="store_true")
    proj.add_argument("--out", default=None)
    return parser


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=True)


def _check_inference(args):
    if args.folds < 2:
        raise ConfigurationError("--folds must be >= 2")
    if args.splits < 1:
        raise ConfigurationError("--splits must be >= 1")
    if args.bootstrap < MIN_BOOTSTRAP:
        raise ConfigurationError(f"--bootstrap must be >= {MIN_BOOTSTRAP}")


def _load(args, outcome: bool):
    data = read_csv(args.data, args.x_cols, args.outcome_col if outcome else None)
    if args.standardize:
        data = data.standardized()
    boundary = read_boundary_file(args.boundary)
    if boundary.dimension != data.d:
        raise ConfigurationError(f"boundary has dimension {boundary.dimension}, data has {data.d} running variables")
    return data, boundary


_TABLE_FIELDS = ("estimate", "bias", "statistic", "se", "z", "p_value")


def _write_result(result, fmt, fh):
    rec = result.to_record()
    if fmt == "records":
        folds = rec.pop("per_fold")
        splits = rec.pop("per_split")
        fh.write(_dumps({"record": "test", **rec}) + "\n")
        for s in splits:
            fh.write(_dumps({"record": "split", **s}) + "\n")
        for f in folds:
            fh.write(_dumps({"record": "fold", **f}) + "\n")
        return
    fh.write(f"{result.kind} test  n={result.n}  K={result.K}  S={result.S}  B={result.B}\n")
    for name in _TABLE_FIELDS:
        fh.write(f"  {name:<10} {rec[name]: .6f}\n")
    fh.write(f"  p-value is {'two-sided' if result.alternative == 'two-sided' else 'one-sided (upper)'}\n")
    for f in rec["per_fold"]:
        items = "  ".join(
            f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in f.items() if k not in ("split", "fold")
        )
        fh.write(f"  split {f['split']} fold {f['fold']}: {items}\n")


def cmd_test_het(args) -> int:
    _check_inference(args)
    data, boundary = _load(args, outcome=True)
    forest = ForestParams(
        num_trees=args.trees or ForestParams.num_trees, min_leaf=args.min_leaf or ForestParams.min_leaf
    )
    params = HetParams(forest, args.bootstrap, h_plus=args.h_plus, h_minus=args.h_minus)
    proj = boundary.project(data.X)
    plan = make_plan(data.n, args.folds, args.splits, seed=args.seed, delta=proj.delta)
    result = heterogeneity_test(data.X, data.Y, boundary, plan, params, projections=proj)
    with _output(args.out) as fh:
        _write_result(result, args.format, fh)
    return EXIT_OK


def cmd_test_density(args) -> int:
    _check_inference(args)
    data, boundary = _load(args, outcome=False)
    forest = DensityParams(num_trees=args.trees or DensityParams.num_trees, depth=args.depth)
    params = DensityTestParams(forest, args.bootstrap, h=args.h)
    proj = boundary.project(data.X)
    plan = make_plan(data.n, args.folds, args.splits, seed=args.seed, delta=proj.delta)
    result = density_test(data.X, boundary, plan, params, projections=proj)
    with _output(args.out) as fh:
        _write_result(result, args.format, fh)
    return EXIT_OK


def cmd_simulate(args) -> int:
    _check_inference(args)
    if args.replications < 1:
        raise ConfigurationError("--replications must be >= 1")
    kwargs = {} if args.noise_sd is None else {"noise_sd": args.noise_sd}
    spec = DgpSpec(args.dgp, args.n, **kwargs)
    cfg = McConfig(
        test=args.test,
        K=args.folds,
        S=args.splits,
        bootstrap=args.bootstrap,
        forest=ForestParams(num_trees=args.trees or 100),
        density_forest=DensityParams(num_trees=args.trees or DensityParams.num_trees),
        oracle=args.oracle,
    )
    report = run_monte_carlo(spec, cfg, R=args.replications, master_seed=args.seed, n_jobs=args.jobs)
    rec = report.to_record()
    rec.pop("wall_time")
    with _output(args.out) as fh:
        if args.format == "records":
            fh.write(_dumps({"record": "monte_carlo", **rec}) + "\n")
            for r in report.records:
                fh.write(_dumps({"record": "replication", **r}) + "\n")
        else:
            fh.write(f"{report.dgp} / {report.test}  n={report.n}  K={report.K}  S={report.S}  R={report.R}\n")
            fh.write(f"  bias            {report.bias: .4f}\n")
            fh.write(f"  mean SE         {report.mean_se: .4f}\n")
            fh.write(f"  rejection rate  {report.rejection_rate: .4f} (MC SE {report.rejection_mc_se:.4f})\n")
            fh.write(f"  failed          {report.n_failed}\n")
            fh.write(f"  wall time       {report.wall_time:.1f}s\n")
    return EXIT_OK


def cmd_project(args) -> int:
    data = read_csv(args.data, args.x_cols)
    if args.standardize:
        data = data.standardized()
    boundary = read_boundary_file(args.boundary)
    if boundary.dimension != data.d:
        raise ConfigurationError(f"boundary has dimension {boundary.dimension}, data has {data.d} running variables")
    proj = boundary.project(data.X)
    cols = {"g": proj.g}
    for j in range(data.d):
        cols[f"gamma_{j + 1}"] = proj.gamma[:, j] if len(proj) else np.empty(0)
    cols["delta"] = proj.delta.astype(np.int64)
    cols["simplex"] = proj.simplex.astype(np.int64)
    write_csv(args.out if args.out else sys.stdout, cols)
    return EXIT_OK


_COMMANDS = {
    "test-het": cmd_test_het,
    "test-density": cmd_test_density,
    "simulate": cmd_simulate,
    "project": cmd_project,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, ConfigurationError) as exc:
        print(f"rdglobal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"rdglobal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BrokenPipeError:
        # Downstream reader closed early (e.g. ``| head``); silence the flush at exit.
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
