"""Command-line entry point.

Subcommands:

  run        execute an experiment grid from a JSON config file
  reproduce  run a preset coverage/length table at desk or full scale
  infer      confidence-set membership on user data (moment CSV or a
             built-in model plus raw-data CSV)
  idset      export the entry-game identified-set grid as CSV
  selfcheck  fast numerical invariant suite

Exit codes: 0 success, 1 usage/config error, 2 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import inference, smoothing
from .core import Dataset, simulate_panel
from .harness import (
    TABLE_IDS,
    ConfigError,
    default_jobs,
    export_results,
    load_config,
    reproduce_table,
    run_experiment,
)
from .models import entry, intersection
from .selfcheck import run_selfcheck
from .streams import Stream

KAPPA_CLI = {"sqrtLogN": "sqrt_log_n", "nPow1over16": "n_pow_1_16"}
INDEX_CLI = {
    "maxplus": smoothing.IndexKind.MAX_PLUS,
    "sumplus": smoothing.IndexKind.SUM_PLUS,
    "qlr": smoothing.IndexKind.QLR,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momineq",
        description="Confidence-set inference for simulated moment-inequality models.",
    )
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run an experiment grid from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config's master_seed")
    p_run.add_argument("--jobs", type=int, default=None)

    p_rep = sub.add_parser("reproduce", help="run a preset table grid")
    p_rep.add_argument("table", choices=[t for t in TABLE_IDS])
    p_rep.add_argument("--scale", choices=("full", "desk"), default="desk")
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--seed", type=int, default=0)
    p_rep.add_argument("--jobs", type=int, default=None)
    p_rep.add_argument("--alpha", type=float, default=0.05)

    p_inf = sub.add_parser("infer", help="confidence-set membership on supplied data")
    p_inf.add_argument("--data", required=True, help="CSV with a header row")
    p_inf.add_argument("--model", choices=("csv", "intersection", "entry"), default="csv")
    p_inf.add_argument("--method", choices=("naive", "gms", "smooth"), default="gms")
    p_inf.add_argument("--theta", default=None, help="comma-separated parameter vector")
    p_inf.add_argument("--draws", type=int, default=1, help="simulation draws per observation")
    p_inf.add_argument("--alpha", type=float, default=0.05)
    p_inf.add_argument("--mu", type=float, default=0.02)
    p_inf.add_argument("--bootstrap", type=int, default=1000)
    p_inf.add_argument("--c", type=float, default=0.0, help="fixed critical value for --method naive")
    p_inf.add_argument("--kappa", choices=tuple(KAPPA_CLI), default="sqrtLogN")
    p_inf.add_argument("--index", choices=tuple(INDEX_CLI), default="maxplus")
    p_inf.add_argument("--r2", type=int, default=100)
    p_inf.add_argument("--seed", type=int, default=0)

    p_id = sub.add_parser("idset", help="export the entry-game identified set grid")
    p_id.add_argument("--out", required=True)
    p_id.add_argument("--dgp-beta", type=float, default=0.9)
    p_id.add_argument("--dgp-delta", type=float, default=-0.5)
    p_id.add_argument("--select-prob", type=float, default=0.7)
    p_id.add_argument("--beta-range", type=float, nargs=2, default=(0.70, 1.10))
    p_id.add_argument("--delta-range", type=float, nargs=2, default=(-0.70, -0.30))
    p_id.add_argument("--n-beta", type=int, default=81)
    p_id.add_argument("--n-delta", type=int, default=81)

    sub.add_parser("selfcheck", help="run the fast numerical invariant suite")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    jobs = args.jobs if args.jobs is not None else config.parallelism
    results = run_experiment(config, jobs=jobs)
    export_results(results, args.out, config={"config_file": args.config, "seed": config.master_seed})
    print(f"wrote {len(results)} cells to {args.out}")
    return 0


def _cmd_reproduce(args) -> int:
    jobs = args.jobs if args.jobs is not None else default_jobs()
    results = reproduce_table(args.table, args.scale, master_seed=args.seed, jobs=jobs,
                              alpha=args.alpha)
    export_results(
        results,
        args.out,
        config={"table": args.table, "scale": args.scale, "seed": args.seed, "alpha": args.alpha},
    )
    print(f"wrote {len(results)} cells to {args.out}")
    return 0


def _load_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = list(data.dtype.names)
    matrix = np.column_stack([data[name] for name in names])
    return names, np.atleast_2d(matrix)


def _parse_theta(text, expected):
    if text is None:
        raise ConfigError("this model needs --theta")
    values = [float(v) for v in text.split(",")]
    if len(values) != expected:
        raise ConfigError(f"--theta needs {expected} component(s)")
    return np.array(values)


def _method_spec(args):
    if args.method == "naive":
        return inference.Fixed(args.c)
    if args.method == "gms":
        return inference.GmsBootstrap(kappa_rule=KAPPA_CLI[args.kappa], n_boot=args.bootstrap)
    return inference.SmoothedBootstrap(mu=args.mu, n_boot=args.bootstrap, r2=args.r2)


def _cmd_infer(args) -> int:
    stream = Stream.from_seed(args.seed)
    cv = inference.CriticalValueSpec(method=_method_spec(args), alpha=args.alpha)

    if args.model == "csv":
        _, rows = _load_csv(args.data)
        spec = smoothing.IndexSpec(INDEX_CLI[args.index], rows.shape[1])
        outcome = inference.membership_from_rows(rows, spec, cv, stream)
    else:
        names, matrix = _load_csv(args.data)
        if args.model == "intersection":
            theta = _parse_theta(args.theta, 1)
            cfg = intersection.IntersectionConfig(n_moments=matrix.shape[1], n_obs=matrix.shape[0])
            model = intersection.intersection_moment_model(cfg)
            data = Dataset(
                tuple(intersection.IntersectionObservation(matrix[i]) for i in range(matrix.shape[0]))
            )
            spec = smoothing.IndexSpec(INDEX_CLI[args.index], cfg.n_moments)
        else:
            theta = _parse_theta(args.theta, 2)
            required = ["y1", "y2", "z1", "z2"]
            if names[:4] != required:
                raise ConfigError(f"entry data needs columns {required}, got {names}")
            cfg = entry.EntryConfig()
            model = entry.entry_moment_model(cfg)
            data = Dataset(
                tuple(
                    entry.EntryObservation(
                        (int(matrix[i, 0]), int(matrix[i, 1])), (matrix[i, 2], matrix[i, 3])
                    )
                    for i in range(matrix.shape[0])
                )
            )
            spec = smoothing.IndexSpec(smoothing.IndexKind.QLR, cfg.n_moments)
        panel = simulate_panel(model, data, args.draws, stream.child("panel"))
        outcome = inference.confidence_membership(
            theta, model, data, panel, spec, cv, stream.child("cv")
        )

    print(f"statistic={outcome.statistic!r}")
    print(f"critical_value={outcome.critical_value!r}")
    print(f"covered={outcome.covered}")
    if outcome.selected is not None:
        print(f"selected={list(outcome.selected)}")
    return 0


def _cmd_idset(args) -> int:
    cfg = entry.EntryConfig(beta=args.dgp_beta, delta=args.dgp_delta, select_prob=args.select_prob)
    betas = np.linspace(args.beta_range[0], args.beta_range[1], args.n_beta)
    deltas = np.linspace(args.delta_range[0], args.delta_range[1], args.n_delta)
    bb, dd = np.meshgrid(betas, deltas, indexing="ij")
    grid = np.column_stack([bb.ravel(), dd.ravel()])
    level_set = entry.identified_set_grid(cfg, grid)
    lines = ["beta,delta,member"]
    for point, member in zip(level_set.grid, level_set.member):
        lines.append(f"{float(point[0])!r},{float(point[1])!r},{int(member)}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {level_set.member.sum()} member points of {grid.shape[0]} to {args.out}")
    return 0


def _cmd_selfcheck() -> int:
    results = run_selfcheck()
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    return 0 if all(r.passed for r in results) else 2


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "reproduce":
            return _cmd_reproduce(args)
        if args.command == "infer":
            return _cmd_infer(args)
        if args.command == "idset":
            return _cmd_idset(args)
        return _cmd_selfcheck()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
