"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 invariant audit
failure, 3 oracle failed to certify an optimum.
"""

from __future__ import annotations

import argparse
import sys

from aggfw.baselines import OracleDidNotConverge
from aggfw.harness.config import (
    ConfigError,
    apply_overrides,
    config_hash,
    parse_config_file,
)
from aggfw.harness.experiments import (
    audit_experiment,
    bench_experiment,
    run_experiment,
    scaling_study,
    stepsize_study,
)
from aggfw.oracles import BENCH_ORACLES
from aggfw.problems import FeasibilityError

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_INVARIANT", "EXIT_ORACLE"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_ORACLE = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits the process on bad arguments; route through ConfigError
    # instead so main() can map usage mistakes to exit code 1
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub: argparse.ArgumentParser, plot: bool = True) -> None:
    sub.add_argument("--config", required=True, help="path to a key = value config file")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    sub.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    if plot:
        sub.add_argument("--no-plot", action="store_true", help="skip figure rendering")


def _build_parser() -> _Parser:
    parser = _Parser(prog="aggfw", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(subs.add_parser("run", help="single optimization run with trace and summary"))
    study = subs.add_parser("stepsize-study", help="compare step rules on one instance")
    _add_common(study)
    study.add_argument(
        "--rules",
        default="inv_k,inv_sqrt_k,inv_k_sq",
        help="comma-separated step rules to compare (at least two)",
    )
    scaling = subs.add_parser("scaling-study", help="dimension sweep with subproblem benchmarks")
    _add_common(scaling)
    scaling.add_argument("--dims", default=None, help="comma-separated dimensions (default: study.dims)")
    scaling.add_argument(
        "--algorithms",
        default="fw_tracking,pga",
        help="comma-separated algorithms to compare",
    )
    scaling.add_argument(
        "--projection",
        choices=("slow", "fast"),
        default=None,
        help="projection variant benched for pga (default: study.slow_projection)",
    )
    _add_common(subs.add_parser("audit", help="run with per-round invariant checks"), plot=False)

    bench = subs.add_parser("bench", help="time one subproblem oracle")
    bench.add_argument("--oracle", required=True, choices=sorted(BENCH_ORACLES))
    bench.add_argument("--n", type=int, required=True, help="input dimension")
    bench.add_argument("--trials", type=int, default=50)
    bench.add_argument("--seed", type=int, default=123)
    bench.add_argument("--out", default="bench.csv", help="CSV path ('-' to skip the file)")
    return parser


def _load_config(args):
    cfg = parse_config_file(args.config)
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(cfg, out_dir=args.out, plot=not args.no_plot)
    print(f"config_hash={result.config_hash}")
    print(f"f_final={result.f_final:.17g}")
    print(f"f_star={result.f_star:.17g}")
    print(f"rel_err={result.rel_err:.17g}")
    print(f"trace={result.trace_path}")
    print(f"summary={result.summary_path}")
    if result.plot_path is not None:
        print(f"plot={result.plot_path}")
    return EXIT_OK


def _cmd_stepsize(args) -> int:
    cfg = _load_config(args)
    rules = tuple(r.strip() for r in args.rules.split(",") if r.strip())
    result = stepsize_study(cfg, rules, out_dir=args.out, plot=not args.no_plot)
    print(f"config_hash={result.config_hash}")
    for rule in result.rules:
        print(f"final_gap[{rule}]={result.final_gaps[rule]:.17g}")
    base = result.rules[0]
    base_gap = result.final_gaps[base]
    for rule in result.rules[1:]:
        if base_gap != 0.0:
            print(f"gap_ratio[{rule}/{base}]={result.final_gaps[rule] / base_gap:.17g}")
    print(f"csv={result.csv_path}")
    if result.plot_path is not None:
        print(f"plot={result.plot_path}")
    return EXIT_OK


def _cmd_scaling(args) -> int:
    cfg = _load_config(args)
    dims = None
    if args.dims is not None:
        try:
            dims = tuple(int(v) for v in args.dims.split(","))
        except ValueError:
            raise ConfigError(f"--dims: expected comma-separated integers, got '{args.dims}'")
    algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    slow = None if args.projection is None else (args.projection == "slow")
    result = scaling_study(
        cfg,
        dims=dims,
        algorithms=algorithms,
        slow_projection=slow,
        out_dir=args.out,
        plot=not args.no_plot,
    )
    print(f"config_hash={result.config_hash}")
    for row in result.rows:
        print(
            f"{row.algorithm} n={row.n} rel_err={row.rel_err:.3e} "
            f"time_to_target_ns={row.time_to_target_ns} "
            f"subproblem_median_ns={row.subproblem_median_ns}"
        )
    print(f"csv={result.csv_path}")
    if result.plot_path is not None:
        print(f"plot={result.plot_path}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    cfg = _load_config(args)
    report = audit_experiment(cfg, out_dir=args.out)
    print(report.render())
    print(f"config_hash={config_hash(cfg)}")
    if not report.passed:
        print("invariant audit failed", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _cmd_bench(args) -> int:
    out = None if args.out == "-" else args.out
    result = bench_experiment(args.oracle, args.n, args.trials, args.seed, out_path=out)
    print(
        f"{result.oracle},{result.n},{result.trials},{result.median_ns},"
        f"{result.p10_ns},{result.p90_ns},{result.seed}"
    )
    if out is not None:
        print(f"csv={out}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "stepsize-study": _cmd_stepsize,
    "scaling-study": _cmd_scaling,
    "audit": _cmd_audit,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FeasibilityError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleDidNotConverge as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
