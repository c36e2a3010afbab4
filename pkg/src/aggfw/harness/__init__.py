"""Experiment harness: config files, drivers, figures, and the CLI."""

from aggfw.harness.config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    build_problem,
    build_schedule,
    build_steps,
    config_hash,
    parse_config,
    parse_config_file,
    problem_hash,
    serialize_config,
)
from aggfw.harness.experiments import (
    AuditCheck,
    AuditReport,
    audit_experiment,
    audit_trace,
    bench_experiment,
    read_trace_csv,
    run_experiment,
    scaling_study,
    stepsize_study,
    write_bench_csv,
    write_trace_csv,
)

__all__ = [
    "AuditCheck",
    "AuditReport",
    "ConfigError",
    "ExperimentConfig",
    "apply_overrides",
    "audit_experiment",
    "audit_trace",
    "bench_experiment",
    "build_problem",
    "build_schedule",
    "build_steps",
    "config_hash",
    "parse_config",
    "parse_config_file",
    "problem_hash",
    "read_trace_csv",
    "run_experiment",
    "scaling_study",
    "serialize_config",
    "stepsize_study",
    "write_bench_csv",
    "write_trace_csv",
]
