"""Experiment drivers behind the CLI subcommands.

Every driver writes its artifacts under an output directory and returns a
small result object, so tests can call drivers directly without going through
argument parsing.  CSV files end with a `# config_hash=<hex>` footer tying the
artifact to the exact configuration that produced it.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from aggfw.baselines import OracleResult, centralized_solve, pga_run
from aggfw.engine import RunTrace, StepSchedule, fw_gap, run
from aggfw.graphs import GraphSchedule, check_schedule
from aggfw.oracles import BENCH_ORACLES, BenchResult, bench_oracle
from aggfw.problems import AggregativeProblem, aggregate, initial_points
from aggfw.harness.config import (
    ConfigError,
    ExperimentConfig,
    build_problem,
    build_schedule,
    build_steps,
    config_hash,
    problem_hash,
    serialize_config,
)

__all__ = [
    "TRACE_HEADER",
    "BENCH_HEADER",
    "SCALING_HEADER",
    "write_trace_csv",
    "read_trace_csv",
    "RunResult",
    "run_experiment",
    "StepsizeResult",
    "stepsize_study",
    "ScalingRow",
    "ScalingResult",
    "scaling_study",
    "AuditCheck",
    "AuditReport",
    "audit_experiment",
    "audit_trace",
    "bench_experiment",
    "write_bench_csv",
]

TRACE_HEADER = "k,f,fw_gap,C_k,y_cons_err,round_time_ns"
BENCH_HEADER = "oracle,n,trials,median_ns,p10_ns,p90_ns,seed"
SCALING_HEADER = (
    "algorithm,n,rel_err,time_to_target_ns,subproblem_median_ns,bench_trials,seed"
)

IDENTITY_TOL = 1e-8
FEASIBILITY_TOL = {"fw_tracking": 1e-12, "pga": 1e-12}
# decay thresholds are stated at the 5000-round operating point and scale
# like the step size, so shorter audits check identities and feasibility only
DECAY_MIN_ROUNDS = 5000
DECAY_FACTOR = 1e-3


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trace_csv(path, trace: RunTrace, cfg_hash: str) -> Path:
    path = Path(path)
    lines = [TRACE_HEADER]
    for i, k in enumerate(trace.ks):
        lines.append(
            f"{k},{_fmt(trace.f[i])},{_fmt(trace.fw_gap[i])},{_fmt(trace.c_k[i])},"
            f"{_fmt(trace.y_cons_err[i])},{trace.round_time_ns[i]}"
        )
    lines.append(f"# config_hash={cfg_hash}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_trace_csv(path) -> dict:
    """Read a trace CSV back into arrays; returns the footer hash under 'config_hash'."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ValueError(f"{path}: not a trace CSV (bad header)")
    if not lines[-1].startswith("# config_hash="):
        raise ValueError(f"{path}: missing config_hash footer")
    rows = [line.split(",") for line in lines[1:-1]]
    cols = {name: [] for name in TRACE_HEADER.split(",")}
    for row in rows:
        if len(row) != 6:
            raise ValueError(f"{path}: malformed row {row}")
        for name, cell in zip(cols, row):
            cols[name].append(cell)
    out = {
        "k": np.array([int(v) for v in cols["k"]]),
        "f": np.array([float(v) for v in cols["f"]]),
        "fw_gap": np.array([float(v) for v in cols["fw_gap"]]),
        "C_k": np.array([float(v) for v in cols["C_k"]]),
        "y_cons_err": np.array([float(v) for v in cols["y_cons_err"]]),
        "round_time_ns": np.array([int(v) for v in cols["round_time_ns"]]),
        "config_hash": lines[-1].removeprefix("# config_hash="),
    }
    return out


def _solve_oracle(cfg: ExperimentConfig, problem: AggregativeProblem, out: Path) -> OracleResult:
    cache = out / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    return centralized_solve(
        problem,
        tol=cfg.oracle_tol,
        max_iter=cfg.oracle_max_iter,
        cache_dir=cache,
        problem_hash=problem_hash(cfg),
    )


def _run_algorithm(
    cfg: ExperimentConfig,
    problem: AggregativeProblem,
    schedule: GraphSchedule,
    x0,
    n_rounds: int,
    record_every: int,
    on_round=None,
) -> RunTrace:
    if cfg.algorithm == "fw_tracking":
        return run(
            problem,
            schedule,
            build_steps(cfg),
            x0,
            n_rounds=n_rounds,
            record_every=record_every,
            on_round=on_round,
        )
    return pga_run(
        problem,
        schedule,
        alpha=cfg.pga_alpha,
        x0=x0,
        n_rounds=n_rounds,
        record_every=record_every,
        diminishing=cfg.pga_diminishing,
        on_round=on_round,
    )


@dataclass(frozen=True)
class RunResult:
    f_final: float
    f_star: float
    rel_err: float
    trace: RunTrace
    oracle: OracleResult
    config_hash: str
    trace_path: Path
    summary_path: Path
    plot_path: Path | None


def run_experiment(cfg: ExperimentConfig, out_dir=None, plot: bool = True) -> RunResult:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)

    problem = build_problem(cfg)
    schedule = build_schedule(cfg)
    x0 = initial_points(problem, mode=cfg.run_x0, seed=cfg.seeds_init)
    oracle = _solve_oracle(cfg, problem, out)

    trace = _run_algorithm(cfg, problem, schedule, x0, cfg.run_rounds, cfg.run_record_every)
    f_final = trace.f[-1]
    rel_err = abs(f_final - oracle.f_star) / (1.0 + abs(oracle.f_star))

    trace_path = write_trace_csv(out / "trace.csv", trace, cfg_hash)
    (out / "config.txt").write_text(serialize_config(cfg), encoding="utf-8")

    summary_lines = [
        f"algorithm = {cfg.algorithm}",
        f"rounds = {cfg.run_rounds}",
        f"f_final = {_fmt(f_final)}",
        f"f_star = {_fmt(oracle.f_star)}",
        f"rel_err = {_fmt(rel_err)}",
        f"fw_gap_final = {_fmt(trace.fw_gap[-1])}",
        f"consensus_err_final = {_fmt(trace.c_k[-1])}",
        f"tracker_err_final = {_fmt(trace.y_cons_err[-1])}",
        f"max_feasibility_violation = {_fmt(trace.max_feas_violation)}",
        f"max_aggregate_identity_residual = {_fmt(trace.max_v_residual)}",
        f"max_tracker_identity_residual = {_fmt(trace.max_y_residual)}",
        f"# config_hash={cfg_hash}",
    ]
    summary_path = out / "summary.txt"
    summary_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")

    plot_path = None
    if plot:
        from aggfw.harness.plotting import plot_objective

        plot_path = plot_objective(
            out / "objective.png",
            trace.ks,
            {cfg.algorithm: trace.f},
            f_star=oracle.f_star,
        )
    return RunResult(
        f_final=f_final,
        f_star=oracle.f_star,
        rel_err=rel_err,
        trace=trace,
        oracle=oracle,
        config_hash=cfg_hash,
        trace_path=trace_path,
        summary_path=summary_path,
        plot_path=plot_path,
    )


@dataclass(frozen=True)
class StepsizeResult:
    rules: tuple[str, ...]
    final_gaps: dict
    traces: dict
    csv_path: Path
    plot_path: Path | None
    config_hash: str


def stepsize_study(
    cfg: ExperimentConfig, rules, out_dir=None, plot: bool = True
) -> StepsizeResult:
    """Run the tracking algorithm under several step rules on one fixed instance."""
    rules = tuple(rules)
    if len(rules) < 2:
        raise ConfigError("stepsize study needs at least two step rules")
    for rule in rules:
        if rule not in ("inv_k", "inv_sqrt_k", "inv_k_sq", "constant"):
            raise ConfigError(f"'steps.rule': unknown step rule '{rule}'")
    if len(set(rules)) != len(rules):
        raise ConfigError("stepsize study rules must be distinct")

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)

    problem = build_problem(cfg)
    schedule = build_schedule(cfg)
    x0 = initial_points(problem, mode=cfg.run_x0, seed=cfg.seeds_init)
    oracle = _solve_oracle(cfg, problem, out)

    traces: dict[str, RunTrace] = {}
    for rule in rules:
        steps = StepSchedule(rule=rule, offset=cfg.steps_offset, constant=cfg.steps_constant)
        traces[rule] = run(
            problem,
            schedule,
            steps,
            x0,
            n_rounds=cfg.run_rounds,
            record_every=cfg.run_record_every,
        )

    final_gaps = {rule: traces[rule].f[-1] - oracle.f_star for rule in rules}

    # all runs share rounds/record_every, so the recorded grids line up
    ks = traces[rules[0]].ks
    header = "k," + ",".join(f"f_{rule}" for rule in rules)
    lines = [header]
    for i, k in enumerate(ks):
        lines.append(f"{k}," + ",".join(_fmt(traces[rule].f[i]) for rule in rules))
    lines.append(f"# config_hash={cfg_hash}")
    csv_path = out / "stepsize.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    plot_path = None
    if plot:
        from aggfw.harness.plotting import plot_objective

        plot_path = plot_objective(
            out / "stepsize.png",
            ks,
            {rule: traces[rule].f for rule in rules},
            f_star=oracle.f_star,
        )
    return StepsizeResult(
        rules=rules,
        final_gaps=final_gaps,
        traces=traces,
        csv_path=csv_path,
        plot_path=plot_path,
        config_hash=cfg_hash,
    )


@dataclass(frozen=True)
class ScalingRow:
    algorithm: str
    n: int
    rel_err: float
    time_to_target_ns: int
    subproblem_median_ns: int
    bench_trials: int
    seed: int


@dataclass(frozen=True)
class ScalingResult:
    rows: tuple[ScalingRow, ...]
    csv_path: Path
    plot_path: Path | None
    trace_paths: dict
    config_hash: str


def _time_to_target(trace: RunTrace, f_star: float, target: float) -> int:
    """Cumulative wall time until the relative error first reaches the target; -1 if never."""
    total = 0
    for i in range(len(trace.ks)):
        total += trace.round_time_ns[i]
        if abs(trace.f[i] - f_star) / (1.0 + abs(f_star)) <= target:
            return total
    return -1


def scaling_study(
    cfg: ExperimentConfig,
    dims=None,
    algorithms=("fw_tracking", "pga"),
    slow_projection=None,
    out_dir=None,
    plot: bool = True,
) -> ScalingResult:
    """Sweep the per-agent dimension and compare subproblem cost across algorithms."""
    dims = tuple(dims) if dims is not None else cfg.study_dims
    algorithms = tuple(algorithms)
    slow = cfg.study_slow_projection if slow_projection is None else bool(slow_projection)
    for alg in algorithms:
        if alg not in ("fw_tracking", "pga"):
            raise ConfigError(f"'algorithm': unknown algorithm '{alg}'")
    if cfg.problem_set_kind != "l1":
        raise ConfigError("scaling study benchmarks l1 subproblems; set problem.set_kind = l1")
    for n in dims:
        if n & (n - 1) != 0:
            warnings.warn(
                f"dimension {n} is not a power of two; timing columns will not "
                "nest with the default grid",
                stacklevel=2,
            )

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)

    schedule = build_schedule(cfg)
    rows: list[ScalingRow] = []
    trace_paths: dict[tuple[str, int], Path] = {}
    curves: dict[str, list[tuple[int, float]]] = {alg: [] for alg in algorithms}

    for n in dims:
        cfg_n = replace(cfg, problem_dim=int(n))
        problem = build_problem(cfg_n)
        x0 = initial_points(problem, mode=cfg.run_x0, seed=cfg.seeds_init)
        oracle = _solve_oracle(cfg_n, problem, out)
        for alg in algorithms:
            cfg_run = replace(cfg_n, algorithm=alg)
            # record every round so time-to-target sums true per-round durations
            trace = _run_algorithm(cfg_run, problem, schedule, x0, cfg.run_rounds, 1)
            rel_err = abs(trace.f[-1] - oracle.f_star) / (1.0 + abs(oracle.f_star))
            ttt = _time_to_target(trace, oracle.f_star, cfg.study_target_rel_err)
            if alg == "fw_tracking":
                bench_name = "lmo_l1"
            else:
                bench_name = "project_l1_slow" if slow else "project_l1"
            bench = bench_oracle(bench_name, int(n), cfg.study_trials, seed=cfg.seeds_bench)
            rows.append(
                ScalingRow(
                    algorithm=alg,
                    n=int(n),
                    rel_err=rel_err,
                    time_to_target_ns=ttt,
                    subproblem_median_ns=bench.median_ns,
                    bench_trials=bench.trials,
                    seed=cfg.seeds_bench,
                )
            )
            trace_paths[(alg, int(n))] = write_trace_csv(
                out / f"trace_{alg}_n{n}.csv", trace, config_hash(cfg_run)
            )
            curves[alg].append((ttt, rel_err))

    lines = [SCALING_HEADER]
    for r in rows:
        lines.append(
            f"{r.algorithm},{r.n},{_fmt(r.rel_err)},{r.time_to_target_ns},"
            f"{r.subproblem_median_ns},{r.bench_trials},{r.seed}"
        )
    lines.append(f"# config_hash={cfg_hash}")
    csv_path = out / "scaling.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    plot_path = None
    if plot:
        from aggfw.harness.plotting import plot_scaling

        plot_path = plot_scaling(out / "scaling.png", rows)
    return ScalingResult(
        rows=tuple(rows),
        csv_path=csv_path,
        plot_path=plot_path,
        trace_paths=trace_paths,
        config_hash=cfg_hash,
    )


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    worst: float
    threshold: float
    first_bad_round: int | None = None

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status}  {self.name}: worst {self.worst:.3e} vs threshold {self.threshold:.3e}"
        if self.first_bad_round is not None:
            line += f" (first violated at round {self.first_bad_round})"
        return line


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[AuditCheck, ...]
    trace: RunTrace

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        lines = [c.render() for c in self.checks]
        lines.append("audit: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def audit_trace(
    problem: AggregativeProblem,
    schedule: GraphSchedule,
    cfg: ExperimentConfig,
    x0,
    n_rounds: int,
) -> AuditReport:
    """Run with per-round invariant monitoring and report worst observed residuals."""
    feas_tol = FEASIBILITY_TOL[cfg.algorithm]
    worst = {"feas": 0.0, "v": 0.0, "y": 0.0}
    first_bad = {"feas": None, "v": None, "y": None}

    def observe(k, state, v_hat, y_hat, residuals):
        for key, value, tol in (
            ("feas", residuals.feasibility, feas_tol),
            ("v", residuals.v_identity, IDENTITY_TOL),
            ("y", residuals.y_identity, IDENTITY_TOL),
        ):
            if value > worst[key]:
                worst[key] = value
            if value > tol and first_bad[key] is None:
                first_bad[key] = k

    trace = _run_algorithm(cfg, problem, schedule, x0, n_rounds, 1, on_round=observe)

    checks = [
        AuditCheck(
            "feasibility (every agent, every round)",
            worst["feas"] <= feas_tol,
            worst["feas"],
            feas_tol,
            first_bad["feas"],
        ),
        AuditCheck(
            "aggregate tracker mean equals true aggregate",
            worst["v"] <= IDENTITY_TOL,
            worst["v"],
            IDENTITY_TOL,
            first_bad["v"],
        ),
        AuditCheck(
            "gradient tracker mean equals mean partial gradient",
            worst["y"] <= IDENTITY_TOL,
            worst["y"],
            IDENTITY_TOL,
            first_bad["y"],
        ),
    ]

    # decay checks need a long horizon to be meaningful
    if n_rounds >= DECAY_MIN_ROUNDS:
        max_diam = max(problem.sets[i].diameter() for i in range(problem.n_agents))
        c_final = trace.c_k[-1]
        c_thresh = DECAY_FACTOR * max_diam
        checks.append(
            AuditCheck(
                "consensus error decayed (final vs feasible-set diameter)",
                c_final < c_thresh,
                c_final,
                c_thresh,
            )
        )
        y_ref = trace.y_cons_err[10]
        y_final = trace.y_cons_err[-1]
        if y_ref == 0.0:
            passed = y_final == 0.0
            thresh = 0.0
        else:
            passed = y_final < DECAY_FACTOR * y_ref
            thresh = DECAY_FACTOR * y_ref
        checks.append(
            AuditCheck(
                "tracker disagreement decayed (final vs round 10)",
                passed,
                y_final,
                thresh,
            )
        )
    return AuditReport(checks=tuple(checks), trace=trace)


def audit_experiment(cfg: ExperimentConfig, out_dir=None) -> AuditReport:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    problem = build_problem(cfg)
    schedule = build_schedule(cfg)
    report_sched = check_schedule(schedule)
    if not (report_sched.doubly_stochastic and report_sched.union_connected):
        raise ConfigError(
            "graph schedule violates mixing assumptions: "
            f"doubly_stochastic={report_sched.doubly_stochastic}, "
            f"union_connected={report_sched.union_connected}"
        )
    x0 = initial_points(problem, mode=cfg.run_x0, seed=cfg.seeds_init)
    report = audit_trace(problem, schedule, cfg, x0, cfg.run_rounds)

    text = report.render() + f"\n# config_hash={config_hash(cfg)}\n"
    (out / "audit.txt").write_text(text, encoding="utf-8")
    write_trace_csv(out / "audit_trace.csv", report.trace, config_hash(cfg))
    return report


def write_bench_csv(path, results) -> Path:
    path = Path(path)
    lines = [BENCH_HEADER]
    for r in results:
        lines.append(
            f"{r.oracle},{r.n},{r.trials},{r.median_ns},{r.p10_ns},{r.p90_ns},{r.seed}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def bench_experiment(oracle: str, n: int, trials: int, seed: int, out_path=None) -> BenchResult:
    if oracle not in BENCH_ORACLES:
        raise ConfigError(
            f"unknown oracle '{oracle}'; choose from {sorted(BENCH_ORACLES)}"
        )
    try:
        result = bench_oracle(oracle, n, trials, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if out_path is not None:
        write_bench_csv(out_path, [result])
    return result
