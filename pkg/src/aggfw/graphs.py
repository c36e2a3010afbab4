"""Time-varying communication graphs: topologies, Metropolis weights, schedules.

A schedule is a finite library of (topology, mixing matrix) pairs plus a pure
round -> library-index selector, so the matrix of any round is random-access
and two runs over the same schedule see identical sequences.  Mixing-rate
constants are always measured empirically from realized products
(`mixing_decay_profile` / `fit_geometric_rate`), never derived from
connectivity constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Topology",
    "MixingMatrix",
    "GraphSchedule",
    "ScheduleReport",
    "lazy_metropolis_weights",
    "metropolis_weights",
    "union_topology",
    "check_schedule",
    "transition_matrix",
    "mixing_decay_profile",
    "fit_geometric_rate",
    "random_schedule",
    "save_schedule",
    "load_schedule",
]

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _normalize_edges(edges, n_agents: int) -> frozenset[tuple[int, int]]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        if not (0 <= i < n_agents and 0 <= j < n_agents):
            raise ValueError(f"edge ({i},{j}) outside 0..{n_agents - 1}")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


@dataclass(frozen=True)
class Topology:
    """Undirected graph over agents 0..n_agents-1; no self-loops."""

    n_agents: int
    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        object.__setattr__(self, "edges", _normalize_edges(self.edges, self.n_agents))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_agents, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_connected(self) -> bool:
        if self.n_agents == 1:
            return True
        adj = [[] for _ in range(self.n_agents)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n_agents


def union_topology(topologies) -> Topology:
    tops = list(topologies)
    if not tops:
        raise ValueError("empty topology list")
    n = tops[0].n_agents
    if any(t.n_agents != n for t in tops):
        raise ValueError("mismatched n_agents across topologies")
    edges = frozenset().union(*(t.edges for t in tops))
    return Topology(n, edges)


@dataclass(frozen=True)
class MixingMatrix:
    """Doubly stochastic, nonnegative consensus weights.

    `eta` is the uniform positivity margin the convergence theory assumes:
    the smallest value among all diagonal entries and all positive
    off-diagonal entries.  A zero self-weight therefore zeroes eta; such
    matrices (e.g. pure swaps) are valid averaging steps but their products
    need not contract.  `validate=False` is a test hook that admits broken
    matrices so downstream detectors can be exercised.
    """

    weights: np.ndarray
    eta: float = field(init=False, default=0.0)
    validate: bool = True

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weights must be a square matrix")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        off = w[~np.eye(w.shape[0], dtype=bool)]
        candidates = np.concatenate([np.diag(w), off[off > 0.0]])
        object.__setattr__(self, "eta", float(candidates.min()))
        if self.validate:
            if (w < -1e-15).any():
                raise ValueError("negative weight")
            if not _doubly_stochastic(w):
                raise ValueError("weights are not doubly stochastic within 1e-12")

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]


def _doubly_stochastic(w: np.ndarray, tol: float = 1e-12) -> bool:
    return (
        float(np.abs(w.sum(axis=1) - 1.0).max()) <= tol
        and float(np.abs(w.sum(axis=0) - 1.0).max()) <= tol
    )


def metropolis_weights(topology: Topology) -> MixingMatrix:
    """Symmetric doubly stochastic weights from node degrees.

    w_ij = 1 / max(deg_i, deg_j) on edges, zero off-graph, and the diagonal
    absorbs the remainder (nonnegative since max(deg_i, .) >= deg_i).
    """
    n = topology.n_agents
    w = np.zeros((n, n))
    deg = topology.degrees()
    for i, j in sorted(topology.edges):
        wij = 1.0 / max(deg[i], deg[j])
        w[i, j] = wij
        w[j, i] = wij
    idx = np.arange(n)
    w[idx, idx] = 1.0 - w.sum(axis=1)
    return MixingMatrix(w)


def lazy_metropolis_weights(topology: Topology) -> MixingMatrix:
    """Metropolis weights averaged with the identity: W = (I + M) / 2.

    Plain Metropolis weights can have zero self-weights (a lone edge between
    two degree-1 nodes is a pure swap), and sequences of such matrices never
    contract.  The lazy variant keeps every self-weight >= 1/2, so any
    schedule built from it satisfies the positivity margin eta > 0 that the
    contraction theory requires.  Schedules therefore use this rule.
    """
    m = metropolis_weights(topology).weights
    return MixingMatrix((np.eye(topology.n_agents) + m) / 2.0)


_SELECTORS = ("uniform", "round_robin")


@dataclass(frozen=True)
class GraphSchedule:
    """Round-indexed sequence of mixing matrices drawn from a finite library.

    selector "uniform" picks library[splitmix64(seed, k) % len] each round;
    "round_robin" cycles deterministically, guaranteeing every member appears
    in any window of len(library) rounds.  window_b is nominal metadata (the
    intended joint-connectivity window); 0 means len(library).
    """

    library: tuple[tuple[Topology, MixingMatrix], ...]
    selector: str = "uniform"
    seed: int = 0
    window_b: int = 0

    def __post_init__(self):
        if not self.library:
            raise ValueError("library must be nonempty")
        n = self.library[0][0].n_agents
        for top, mix in self.library:
            if top.n_agents != n or mix.n_agents != n:
                raise ValueError("library members disagree on n_agents")
        if self.selector not in _SELECTORS:
            raise ValueError(f"unknown selector '{self.selector}'")
        if self.window_b == 0:
            object.__setattr__(self, "window_b", len(self.library))
        if self.window_b < 1:
            raise ValueError("window_b must be >= 1")

    @property
    def n_agents(self) -> int:
        return self.library[0][0].n_agents

    def index_at(self, k: int) -> int:
        if k < 0:
            raise ValueError("round index must be >= 0")
        if self.selector == "round_robin":
            return k % len(self.library)
        h = _splitmix64((self.seed & _MASK64) ^ _splitmix64(k))
        return h % len(self.library)

    def matrix_at(self, k: int) -> np.ndarray:
        return self.library[self.index_at(k)][1].weights

    def union(self) -> Topology:
        return union_topology(t for t, _ in self.library)


@dataclass(frozen=True)
class ScheduleReport:
    doubly_stochastic: bool
    eta: float
    union_connected: bool


def check_schedule(schedule: GraphSchedule) -> ScheduleReport:
    """Report the schedule-wide mixing facts the convergence theory needs.

    eta is the worst positivity margin over the library (diagonals included);
    eta = 0 flags a matrix whose products may never contract, even if every
    matrix is doubly stochastic and the union graph is connected.
    """
    ds = all(_doubly_stochastic(m.weights) for _, m in schedule.library)
    eta = min(m.eta for _, m in schedule.library)
    return ScheduleReport(
        doubly_stochastic=ds,
        eta=eta,
        union_connected=schedule.union().is_connected(),
    )


def transition_matrix(schedule: GraphSchedule, k: int, s: int) -> np.ndarray:
    """Product W_k @ W_{k-1} @ ... @ W_s of realized matrices; k = s-1 gives I."""
    if s < 0 or k < s - 1:
        raise ValueError("need k >= s-1 >= -1")
    m = np.eye(schedule.n_agents)
    for t in range(s, k + 1):
        m = schedule.matrix_at(t) @ m
    return m


def mixing_decay_profile(schedule: GraphSchedule, s: int, horizon: int) -> list[tuple[int, float]]:
    """Max-entry deviation of the transition product from the averaging matrix.

    Returns [(k, max_ij |Phi(k,s)_ij - 1/N|)] for k = s .. s+horizon-1,
    computed incrementally.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = schedule.n_agents
    m = np.eye(n)
    out = []
    for k in range(s, s + horizon):
        m = schedule.matrix_at(k) @ m
        out.append((k, float(np.abs(m - 1.0 / n).max())))
    return out


def fit_geometric_rate(profile: list[tuple[int, float]], tail: float = 0.5) -> tuple[float, float]:
    """Log-linear fit dev ~ theta * beta**(k - s) over the profile tail.

    Empirical by construction; points at or below float noise are dropped.
    Returns (theta_hat, beta_hat).
    """
    if not 0.0 < tail <= 1.0:
        raise ValueError("tail must be in (0, 1]")
    s0 = profile[0][0]
    start = int(len(profile) * (1.0 - tail))
    exps = np.array([k - s0 for k, _ in profile[start:]], dtype=float)
    devs = np.array([d for _, d in profile[start:]], dtype=float)
    keep = devs > 1e-15
    exps, devs = exps[keep], devs[keep]
    if exps.size < 2:
        raise ValueError("not enough points above the noise floor to fit a rate")
    slope, intercept = np.polyfit(exps, np.log(devs), 1)
    return float(np.exp(intercept)), float(np.exp(slope))


def random_schedule(
    n_agents: int,
    seed: int,
    n_graphs: int = 3,
    edge_prob: float = 0.6,
    selector: str = "uniform",
    window_b: int = 0,
) -> GraphSchedule:
    """Library of n_graphs topologies partitioning a connected random base graph.

    The base graph is sampled edge-by-edge with probability edge_prob and
    resampled until connected; its sorted edge list is dealt round-robin into
    n_graphs groups over all nodes, so the library union is the base graph and
    stays connected.  A single-agent schedule is the identity matrix alone.
    """
    if n_agents == 1:
        top = Topology(1, frozenset())
        return GraphSchedule(
            library=((top, lazy_metropolis_weights(top)),),
            selector=selector,
            seed=seed,
            window_b=window_b,
        )
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        edges = [
            (i, j)
            for i in range(n_agents)
            for j in range(i + 1, n_agents)
            if rng.random() < edge_prob
        ]
        base = Topology(n_agents, frozenset(edges))
        if base.is_connected():
            break
    else:
        raise RuntimeError("could not sample a connected base graph")
    edge_list = sorted(base.edges)
    if len(edge_list) < n_graphs:
        raise ValueError(f"base graph has {len(edge_list)} edges < {n_graphs} groups")
    groups: list[list[tuple[int, int]]] = [[] for _ in range(n_graphs)]
    for idx, e in enumerate(edge_list):
        groups[idx % n_graphs].append(e)
    library = []
    for g in groups:
        top = Topology(n_agents, frozenset(g))
        library.append((top, lazy_metropolis_weights(top)))
    return GraphSchedule(
        library=tuple(library), selector=selector, seed=seed, window_b=window_b
    )


def save_schedule(schedule: GraphSchedule, path) -> None:
    """Write the documented plain-text schedule format.

    Stores topologies only; weights are rebuilt with the lazy Metropolis rule
    on load, so hand-built matrices do not survive a round trip.
    """
    lines = [
        "# graph schedule",
        f"n_agents = {schedule.n_agents}",
        f"selector = {schedule.selector}",
        f"selector_seed = {schedule.seed}",
        f"window_b = {schedule.window_b}",
    ]
    for top, _ in schedule.library:
        edges = " ".join(f"{i}-{j}" for i, j in sorted(top.edges))
        lines.append(f"graph = {edges}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schedule(path) -> GraphSchedule:
    """Parse the plain-text schedule format written by `save_schedule`."""
    n_agents = None
    selector = "uniform"
    seed = 0
    window_b = 0
    graphs: list[frozenset[tuple[int, int]]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key == "n_agents":
                n_agents = int(value)
            elif key == "selector":
                selector = value
            elif key == "selector_seed":
                seed = int(value)
            elif key == "window_b":
                window_b = int(value)
            elif key == "graph":
                edges = set()
                for tok in value.split():
                    a, _, b = tok.partition("-")
                    edges.add((int(a), int(b)))
                graphs.append(frozenset(edges))
            else:
                raise ValueError(f"unknown key '{key}'")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if n_agents is None:
        raise ValueError(f"{path}: missing n_agents")
    if not graphs:
        raise ValueError(f"{path}: no graph lines")
    library = []
    for edges in graphs:
        top = Topology(n_agents, edges)
        library.append((top, lazy_metropolis_weights(top)))
    return GraphSchedule(
        library=tuple(library), selector=selector, seed=seed, window_b=window_b
    )
