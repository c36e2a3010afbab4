"""Plain-text experiment configuration: parsing, validation, canonical hashing.

Format: one `key = value` per line, full-line comments with '#', blank lines
ignored.  Lists are comma-separated.  Serialization is canonical (sorted
keys, round-trippable float formatting), and the config hash is the sha256 of
that canonical text, so equal configs hash equally regardless of the input
file's layout.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from aggfw.engine import StepSchedule
from aggfw.graphs import GraphSchedule, load_schedule, random_schedule
from aggfw.problems import AggregativeProblem, EnergyParams, make_energy_problem

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_file",
    "serialize_config",
    "config_hash",
    "problem_hash",
    "apply_overrides",
    "build_problem",
    "build_schedule",
    "build_steps",
]

ALGORITHMS = ("fw_tracking", "pga")


class ConfigError(ValueError):
    """Bad configuration input; the message names the offending key or line."""


@dataclass(frozen=True)
class ExperimentConfig:
    problem_n_agents: int = 5
    problem_dim: int = 16
    problem_a: float = 0.04
    problem_p0: float = 5.0
    problem_chi: tuple[float, ...] = (3.0, 5.0, 6.0, 1.0, 2.0)
    problem_k: tuple[float, ...] = (1.0,)
    problem_radii: tuple[float, ...] = (5.0, 7.0, 9.0, 3.0, 6.0)
    problem_set_kind: str = "l1"
    algorithm: str = "fw_tracking"
    steps_rule: str = "inv_k"
    steps_offset: float = 1.0
    steps_constant: float = 0.1
    pga_alpha: float = 0.01
    pga_diminishing: bool = False
    run_rounds: int = 5000
    run_record_every: int = 10
    run_x0: str = "zeros"
    seeds_graph: int = 42
    seeds_init: int = 7
    seeds_bench: int = 123
    graph_n_graphs: int = 3
    graph_edge_prob: float = 0.6
    graph_window_b: int = 0
    graph_selector: str = "uniform"
    graph_schedule_file: str = ""
    oracle_tol: float = 1e-8
    oracle_max_iter: int = 50000
    study_dims: tuple[int, ...] = (16, 32, 64, 128, 256)
    study_target_rel_err: float = 1e-2
    study_trials: int = 30
    study_slow_projection: bool = True
    output_dir: str = "out"


# dot-key <-> (attribute, codec); single source of truth for parse/serialize
_KEYS: dict[str, tuple[str, str]] = {
    "problem.n_agents": ("problem_n_agents", "int"),
    "problem.dim": ("problem_dim", "int"),
    "problem.a": ("problem_a", "float"),
    "problem.p0": ("problem_p0", "float"),
    "problem.chi": ("problem_chi", "floats"),
    "problem.k": ("problem_k", "floats"),
    "problem.radii": ("problem_radii", "floats"),
    "problem.set_kind": ("problem_set_kind", "str"),
    "algorithm": ("algorithm", "str"),
    "steps.rule": ("steps_rule", "str"),
    "steps.offset": ("steps_offset", "float"),
    "steps.constant": ("steps_constant", "float"),
    "pga.alpha": ("pga_alpha", "float"),
    "pga.diminishing": ("pga_diminishing", "bool"),
    "run.rounds": ("run_rounds", "int"),
    "run.record_every": ("run_record_every", "int"),
    "run.x0": ("run_x0", "str"),
    "seeds.graph": ("seeds_graph", "int"),
    "seeds.init": ("seeds_init", "int"),
    "seeds.bench": ("seeds_bench", "int"),
    "graph.n_graphs": ("graph_n_graphs", "int"),
    "graph.edge_prob": ("graph_edge_prob", "float"),
    "graph.window_b": ("graph_window_b", "int"),
    "graph.selector": ("graph_selector", "str"),
    "graph.schedule_file": ("graph_schedule_file", "str"),
    "oracle.tol": ("oracle_tol", "float"),
    "oracle.max_iter": ("oracle_max_iter", "int"),
    "study.dims": ("study_dims", "ints"),
    "study.target_rel_err": ("study_target_rel_err", "float"),
    "study.trials": ("study_trials", "int"),
    "study.slow_projection": ("study_slow_projection", "bool"),
    "output_dir": ("output_dir", "str"),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEYS.items()}


def _decode(codec: str, text: str):
    if codec == "int":
        return int(text)
    if codec == "float":
        return float(text)
    if codec == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got '{text}'")
    if codec == "floats":
        if not text:
            raise ValueError("empty list")
        return tuple(float(v) for v in text.split(","))
    if codec == "ints":
        if not text:
            raise ValueError("empty list")
        return tuple(int(v) for v in text.split(","))
    return text


def _encode(codec: str, value) -> str:
    if codec == "float":
        return f"{value:.17g}"
    if codec == "bool":
        return "true" if value else "false"
    if codec == "floats":
        return ",".join(f"{v:.17g}" for v in value)
    if codec == "ints":
        return ",".join(str(v) for v in value)
    return str(value)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, object] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key '{key}' (first set on line {seen[key]})"
            )
        seen[key] = lineno
        attr, codec = _KEYS[key]
        try:
            values[attr] = _decode(codec, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for '{key}': {exc}") from None
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def parse_config_file(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key in sorted(_KEYS):
        attr, codec = _KEYS[key]
        lines.append(f"{key} = {_encode(codec, getattr(cfg, attr))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


def problem_hash(cfg: ExperimentConfig) -> str:
    """Hash of the problem block only; keys the oracle cache."""
    lines = [
        f"{key} = {_encode(codec, getattr(cfg, attr))}"
        for key, (attr, codec) in sorted(_KEYS.items())
        if key.startswith("problem.")
    ]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply 'key=value' overrides (CLI --set) on top of a parsed config."""
    updates: dict[str, object] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        if key not in _KEYS:
            raise ConfigError(f"override: unknown key '{key}'")
        attr, codec = _KEYS[key]
        try:
            updates[attr] = _decode(codec, value)
        except ValueError as exc:
            raise ConfigError(f"override: bad value for '{key}': {exc}") from None
    out = replace(cfg, **updates)
    _validate(out)
    return out


def _broadcast(name: str, values: tuple, n: int) -> tuple:
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ConfigError(f"'{name}' has {len(values)} entries, want 1 or {n}")
    return values


def _validate(cfg: ExperimentConfig) -> None:
    def need(cond: bool, key: str, why: str):
        if not cond:
            raise ConfigError(f"'{key}': {why}")

    need(cfg.problem_n_agents >= 1, "problem.n_agents", "must be >= 1")
    need(cfg.problem_dim >= 1, "problem.dim", "must be >= 1")
    need(cfg.problem_a > 0.0, "problem.a", "must be positive")
    need(cfg.problem_set_kind in ("l1", "linf"), "problem.set_kind", "must be l1 or linf")
    need(cfg.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}")
    need(
        cfg.steps_rule in ("inv_k", "inv_sqrt_k", "inv_k_sq", "constant"),
        "steps.rule",
        "unknown step rule",
    )
    need(cfg.steps_offset > 0.0, "steps.offset", "must be positive")
    need(0.0 <= cfg.steps_constant < 1.0, "steps.constant", "must lie in [0, 1)")
    need(cfg.pga_alpha > 0.0, "pga.alpha", "must be positive")
    need(cfg.run_rounds >= 1, "run.rounds", "must be >= 1")
    need(cfg.run_record_every >= 1, "run.record_every", "must be >= 1")
    need(cfg.run_x0 in ("zeros", "vertex", "random"), "run.x0", "must be zeros|vertex|random")
    need(cfg.graph_n_graphs >= 1, "graph.n_graphs", "must be >= 1")
    need(0.0 < cfg.graph_edge_prob <= 1.0, "graph.edge_prob", "must lie in (0, 1]")
    need(cfg.graph_window_b >= 0, "graph.window_b", "must be >= 0 (0 = library size)")
    need(
        cfg.graph_selector in ("uniform", "round_robin"),
        "graph.selector",
        "must be uniform or round_robin",
    )
    need(cfg.oracle_tol > 0.0, "oracle.tol", "must be positive")
    need(cfg.oracle_max_iter >= 1, "oracle.max_iter", "must be >= 1")
    need(len(cfg.study_dims) >= 1, "study.dims", "must be a nonempty list")
    need(all(d >= 1 for d in cfg.study_dims), "study.dims", "entries must be >= 1")
    need(cfg.study_target_rel_err > 0.0, "study.target_rel_err", "must be positive")
    need(cfg.study_trials >= 10, "study.trials", "must be >= 10")
    # chi/k/radii lengths checked against n_agents at build time (singletons broadcast)


def build_problem(cfg: ExperimentConfig) -> AggregativeProblem:
    n = cfg.problem_n_agents
    chi = _broadcast("problem.chi", cfg.problem_chi, n)
    radii = _broadcast("problem.radii", cfg.problem_radii, n)
    k = _broadcast("problem.k", cfg.problem_k, n)
    try:
        params = EnergyParams(
            chi=chi,
            radii=radii,
            k=k,
            a=cfg.problem_a,
            p0=cfg.problem_p0,
            set_kind=cfg.problem_set_kind,
        )
        return make_energy_problem(params, cfg.problem_dim)
    except ValueError as exc:
        raise ConfigError(f"problem block: {exc}") from None


def build_schedule(cfg: ExperimentConfig) -> GraphSchedule:
    if cfg.graph_schedule_file:
        try:
            schedule = load_schedule(cfg.graph_schedule_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"graph.schedule_file: {exc}") from None
        if schedule.n_agents != cfg.problem_n_agents:
            raise ConfigError(
                f"graph.schedule_file: schedule has {schedule.n_agents} agents, "
                f"config has {cfg.problem_n_agents}"
            )
        return schedule
    try:
        return random_schedule(
            cfg.problem_n_agents,
            seed=cfg.seeds_graph,
            n_graphs=cfg.graph_n_graphs,
            edge_prob=cfg.graph_edge_prob,
            selector=cfg.graph_selector,
            window_b=cfg.graph_window_b,
        )
    except ValueError as exc:
        raise ConfigError(f"graph block: {exc}") from None


def build_steps(cfg: ExperimentConfig) -> StepSchedule:
    return StepSchedule(
        rule=cfg.steps_rule, offset=cfg.steps_offset, constant=cfg.steps_constant
    )
