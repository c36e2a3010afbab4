"""Distributed projection-free optimization with aggregate and gradient tracking.

Each round mixes both trackers over the current graph, points every agent's
linear oracle at a tracked gradient surrogate, moves by a vanishing convex
combination, and refreshes the trackers with local increments.  Feasibility
is preserved exactly because iterates never leave the convex hull of their
own set; the tracker means equal the true aggregate quantities at every round
by a telescoping argument, and the run loop verifies both facts as it goes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from aggfw.graphs import GraphSchedule
from aggfw.problems import (
    AggregativeProblem,
    FeasibilityError,
    full_gradient,
)

__all__ = [
    "StepSchedule",
    "StepCompliance",
    "SwarmState",
    "RoundResiduals",
    "RunTrace",
    "init_state",
    "consensus_step",
    "fw_direction",
    "strategy_update",
    "tracking_update",
    "fw_gap",
    "run",
]

_RULES = ("inv_k", "inv_sqrt_k", "inv_k_sq", "constant")


@dataclass(frozen=True)
class StepCompliance:
    nonincreasing: bool
    nonsummable: bool
    square_summable: bool


@dataclass(frozen=True)
class StepSchedule:
    """Deterministic step-size rule gamma_k, clamped into [0, 1].

    The clamp admits gamma_0 = 1 (e.g. 1/(k+1) at k = 0), which wipes the
    arbitrary start in the first round.  Compliance with the usual conditions
    (nonincreasing, nonsummable, square-summable) is evaluated symbolically
    per rule, never by sampling.
    """

    rule: str = "inv_k"
    offset: float = 1.0
    constant: float = 0.1

    def __post_init__(self):
        if self.rule not in _RULES:
            raise ValueError(f"unknown step rule '{self.rule}'")
        if self.offset <= 0.0:
            raise ValueError("offset must be positive")
        if self.rule == "constant" and not 0.0 <= self.constant < 1.0:
            raise ValueError("constant step must lie in [0, 1)")

    def gamma(self, k: int) -> float:
        if k < 0:
            raise ValueError("round index must be >= 0")
        if self.rule == "inv_k":
            val = 1.0 / (k + self.offset)
        elif self.rule == "inv_sqrt_k":
            val = 1.0 / np.sqrt(k + self.offset)
        elif self.rule == "inv_k_sq":
            val = 1.0 / (k + self.offset) ** 2
        else:
            val = self.constant
        return min(1.0, float(val))

    @property
    def compliance(self) -> StepCompliance:
        if self.rule == "inv_k":
            return StepCompliance(True, True, True)
        if self.rule == "inv_sqrt_k":
            return StepCompliance(True, True, False)
        if self.rule == "inv_k_sq":
            return StepCompliance(True, False, True)
        if self.constant > 0.0:
            return StepCompliance(True, True, False)
        return StepCompliance(True, False, True)


@dataclass
class SwarmState:
    """Strategies plus both trackers at the top of round k."""

    k: int
    x: list[np.ndarray]
    v: np.ndarray  # (N, agg_dim) aggregate tracker
    y: np.ndarray  # (N, agg_dim) gradient tracker


@dataclass(frozen=True)
class RoundResiduals:
    """Per-round invariant residuals handed to `on_round` observers."""

    feasibility: float
    v_identity: float
    y_identity: float


@dataclass
class RunTrace:
    """Recorded metrics plus terminal state and worst invariant residuals.

    `round_time_ns` / `subproblem_ns` at a recorded round are the durations
    of the round that produced that strategy (0 for round 0); observer cost
    is excluded from both.
    """

    ks: np.ndarray
    f: np.ndarray
    fw_gap: np.ndarray
    c_k: np.ndarray
    y_cons_err: np.ndarray
    round_time_ns: np.ndarray
    subproblem_ns: np.ndarray
    final_state: SwarmState
    max_feas_violation: float
    max_v_residual: float
    max_y_residual: float


def init_state(problem: AggregativeProblem, x0) -> SwarmState:
    """Start trackers self-consistent: each agent holds its own map value and
    its own z-gradient there, so the mean identities hold at round 0."""
    x = [np.array(xi, dtype=float) for xi in x0]
    if len(x) != problem.n_agents:
        raise ValueError("x0 length must match the number of agents")
    for i, (s, xi) in enumerate(zip(problem.sets, x)):
        if xi.shape != (s.dim,):
            raise ValueError(f"agent {i}: x0 has shape {xi.shape}, want ({s.dim},)")
        if not s.contains(xi, tol=1e-12):
            raise FeasibilityError(f"agent {i}: x0 outside its feasible set")
    v = np.stack([np.asarray(problem.agg_maps[i](x[i]), dtype=float) for i in range(len(x))])
    y = np.stack([np.asarray(problem.grads_z[i](x[i], v[i]), dtype=float) for i in range(len(x))])
    return SwarmState(k=0, x=x, v=v, y=y)


def consensus_step(weights: np.ndarray, v: np.ndarray, y: np.ndarray):
    """Mix both trackers with one doubly stochastic matrix (row i averages
    over i's neighbors)."""
    return weights @ v, weights @ y


def fw_direction(problem: AggregativeProblem, x, v_hat: np.ndarray, y_hat: np.ndarray):
    """Per-agent gradient surrogate: local x-gradient at the mixed aggregate
    estimate plus the local Jacobian applied to the mixed gradient tracker."""
    return [
        np.asarray(problem.grads_x[i](x[i], v_hat[i]), dtype=float)
        + np.asarray(problem.agg_jacs[i](x[i]), dtype=float) @ y_hat[i]
        for i in range(len(x))
    ]


def strategy_update(x, vertices, gamma: float):
    """Convex combination toward the oracle vertices; never leaves the sets."""
    return [(1.0 - gamma) * xi + gamma * si for xi, si in zip(x, vertices)]


def tracking_update(problem: AggregativeProblem, x_old, x_new, v_old: np.ndarray,
                    v_hat: np.ndarray, y_hat: np.ndarray):
    """Tracker refresh, v before y; y differences the pre- and post-update pairs.

    Subtraction happens first in both updates: when the mixed value equals the
    subtrahend (single agent, identity weights) the new tracker lands exactly
    on the fresh local value, bitwise.
    """
    n = len(x_old)
    phis_old = np.stack([np.asarray(problem.agg_maps[i](x_old[i]), dtype=float) for i in range(n)])
    phis_new = np.stack([np.asarray(problem.agg_maps[i](x_new[i]), dtype=float) for i in range(n)])
    v_new = (v_hat - phis_old) + phis_new
    gz_old = np.stack(
        [np.asarray(problem.grads_z[i](x_old[i], v_old[i]), dtype=float) for i in range(n)]
    )
    gz_new = np.stack(
        [np.asarray(problem.grads_z[i](x_new[i], v_new[i]), dtype=float) for i in range(n)]
    )
    y_new = (y_hat - gz_old) + gz_new
    return v_new, y_new


def fw_gap(problem: AggregativeProblem, x) -> float:
    """Duality gap <grad f(x), x - s*> with s* the per-set linear minimizers.

    Nonnegative at feasible points and an upper bound on f(x) - f* for convex
    objectives.
    """
    grads = full_gradient(problem, x)
    total = 0.0
    for gi, xi, s in zip(grads, x, problem.sets):
        total += float(gi @ xi) - s.lmo(gi).inner_product
    return total


def _tracked_run(
    problem: AggregativeProblem,
    schedule: GraphSchedule,
    x0,
    n_rounds: int,
    record_every: int,
    strategy,
    on_round=None,
) -> RunTrace:
    """Shared consensus + tracking loop; `strategy` supplies the move.

    strategy(k, x, v_hat, y_hat) -> (x_new, subproblem_ns).  Records at every
    multiple of record_every and at the terminal round; invariant residuals
    are tracked every round regardless.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    if schedule.n_agents != problem.n_agents:
        raise ValueError("schedule and problem disagree on the number of agents")

    state = init_state(problem, x0)
    n = problem.n_agents
    cols: dict[str, list] = {key: [] for key in ("ks", "f", "gap", "c", "yerr", "rt", "sub")}
    max_feas = max_v_res = max_y_res = 0.0
    prev_round_ns = prev_sub_ns = 0

    for k in range(n_rounds + 1):
        w = schedule.matrix_at(k)
        t0 = time.perf_counter_ns()
        v_hat = w @ state.v
        y_hat = w @ state.y
        consensus_ns = time.perf_counter_ns() - t0

        phis = np.stack(
            [np.asarray(problem.agg_maps[i](state.x[i]), dtype=float) for i in range(n)]
        )
        delta = phis.mean(axis=0)
        gz = np.stack(
            [np.asarray(problem.grads_z[i](state.x[i], state.v[i]), dtype=float) for i in range(n)]
        )
        gz_mean = gz.mean(axis=0)
        feas = max(problem.sets[i].violation(state.x[i]) for i in range(n))
        v_res = float(np.linalg.norm(state.v.mean(axis=0) - delta)) / (
            1.0 + float(np.linalg.norm(delta))
        )
        y_res = float(np.linalg.norm(state.y.mean(axis=0) - gz_mean)) / (
            1.0 + float(np.linalg.norm(gz_mean))
        )
        max_feas = max(max_feas, feas)
        max_v_res = max(max_v_res, v_res)
        max_y_res = max(max_y_res, y_res)

        if k % record_every == 0 or k == n_rounds:
            f_val = float(sum(problem.costs[i](state.x[i], delta) for i in range(n)))
            cols["ks"].append(k)
            cols["f"].append(f_val)
            cols["gap"].append(fw_gap(problem, state.x))
            cols["c"].append(float(np.linalg.norm(delta - v_hat, axis=1).max()))
            cols["yerr"].append(float(np.linalg.norm(y_hat - state.y.mean(axis=0))))
            cols["rt"].append(prev_round_ns)
            cols["sub"].append(prev_sub_ns)
        if on_round is not None:
            on_round(k, state, v_hat, y_hat, RoundResiduals(feas, v_res, y_res))
        if k == n_rounds:
            break

        t1 = time.perf_counter_ns()
        x_new, sub_ns = strategy(k, state.x, v_hat, y_hat)
        phis_new = np.stack(
            [np.asarray(problem.agg_maps[i](x_new[i]), dtype=float) for i in range(n)]
        )
        # subtract first: exact telescoping (see tracking_update)
        v_new = (v_hat - phis) + phis_new
        gz_new = np.stack(
            [np.asarray(problem.grads_z[i](x_new[i], v_new[i]), dtype=float) for i in range(n)]
        )
        y_new = (y_hat - gz) + gz_new
        prev_round_ns = consensus_ns + (time.perf_counter_ns() - t1)
        prev_sub_ns = sub_ns
        state = SwarmState(k=k + 1, x=x_new, v=v_new, y=y_new)

    return RunTrace(
        ks=np.array(cols["ks"], dtype=int),
        f=np.array(cols["f"]),
        fw_gap=np.array(cols["gap"]),
        c_k=np.array(cols["c"]),
        y_cons_err=np.array(cols["yerr"]),
        round_time_ns=np.array(cols["rt"], dtype=np.int64),
        subproblem_ns=np.array(cols["sub"], dtype=np.int64),
        final_state=state,
        max_feas_violation=max_feas,
        max_v_residual=max_v_res,
        max_y_residual=max_y_res,
    )


def run(
    problem: AggregativeProblem,
    schedule: GraphSchedule,
    steps: StepSchedule,
    x0,
    n_rounds: int,
    record_every: int = 10,
    on_round=None,
) -> RunTrace:
    """Run the tracking Frank-Wolfe loop for n_rounds rounds.

    Deterministic: given the same problem, schedule, step rule and start, two
    runs produce bit-identical iterates (recorded wall times excepted).
    """

    def strategy(k, x, v_hat, y_hat):
        dirs = fw_direction(problem, x, v_hat, y_hat)
        gamma = steps.gamma(k)
        sub_ns = 0
        out = []
        for xi, di, s in zip(x, dirs, problem.sets):
            res = s.lmo(di)
            sub_ns += res.elapsed_ns
            out.append((1.0 - gamma) * xi + gamma * res.vertex)
        return out, sub_ns

    return _tracked_run(problem, schedule, x0, n_rounds, record_every, strategy, on_round)
