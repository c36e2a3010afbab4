"""Distributed projection-free optimization of aggregative costs.

Agents hold private blocks of the decision variable, communicate over a
time-varying gossip network, and steer with linear-minimization steps instead
of projections.  Two running sums per agent track the network-wide aggregate
and its gradient, so every agent optimizes the global objective from local
information.
"""

from aggfw.baselines import (
    OracleDidNotConverge,
    OracleResult,
    centralized_solve,
    frank_wolfe_reference,
    pga_run,
    projected_gradient_reference,
)
from aggfw.engine import RunTrace, StepSchedule, SwarmState, fw_gap, init_state, run
from aggfw.graphs import (
    GraphSchedule,
    MixingMatrix,
    Topology,
    check_schedule,
    fit_geometric_rate,
    lazy_metropolis_weights,
    load_schedule,
    metropolis_weights,
    mixing_decay_profile,
    random_schedule,
    save_schedule,
    transition_matrix,
)
from aggfw.oracles import (
    BenchResult,
    LmoResult,
    bench_oracle,
    lmo_box,
    lmo_l1,
    lmo_linf,
    project_l1,
    project_l1_active_set,
)
from aggfw.problems import (
    AggregativeProblem,
    EnergyParams,
    FeasibilityError,
    FeasibleSet,
    aggregate,
    box,
    check_convexity,
    full_gradient,
    global_objective,
    initial_points,
    l1_ball,
    linf_ball,
    make_energy_problem,
    make_problem,
    validate_smoothness,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AggregativeProblem",
    "BenchResult",
    "EnergyParams",
    "FeasibilityError",
    "FeasibleSet",
    "GraphSchedule",
    "LmoResult",
    "MixingMatrix",
    "OracleDidNotConverge",
    "OracleResult",
    "RunTrace",
    "StepSchedule",
    "SwarmState",
    "Topology",
    "aggregate",
    "bench_oracle",
    "box",
    "centralized_solve",
    "check_convexity",
    "check_schedule",
    "fit_geometric_rate",
    "frank_wolfe_reference",
    "full_gradient",
    "fw_gap",
    "global_objective",
    "init_state",
    "initial_points",
    "l1_ball",
    "lazy_metropolis_weights",
    "linf_ball",
    "lmo_box",
    "lmo_l1",
    "lmo_linf",
    "load_schedule",
    "make_energy_problem",
    "make_problem",
    "metropolis_weights",
    "mixing_decay_profile",
    "pga_run",
    "project_l1",
    "project_l1_active_set",
    "projected_gradient_reference",
    "random_schedule",
    "run",
    "save_schedule",
    "transition_matrix",
    "validate_smoothness",
]
