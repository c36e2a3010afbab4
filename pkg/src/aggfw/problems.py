"""Aggregative cost structure: per-agent costs coupled through the mean of
local maps.

A problem bundles, per agent i, a cost g_i(x_i, z), its partial gradients in
x_i and z, a local aggregation map phi_i with Jacobian, and a feasible set.
The global objective evaluates every cost at z = delta(x) = mean_i phi_i(x_i),
and the chain rule gives the per-agent gradient block

    grad_i f(x) = grad_x g_i(x_i, delta(x))
                  + jac_phi_i(x_i) @ mean_j grad_z g_j(x_j, delta(x)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from aggfw.oracles import LmoResult, lmo_box, lmo_l1, lmo_linf, project_l1

__all__ = [
    "FeasibleSet",
    "l1_ball",
    "linf_ball",
    "box",
    "AggregativeProblem",
    "make_problem",
    "EnergyParams",
    "make_energy_problem",
    "aggregate",
    "global_objective",
    "full_gradient",
    "stack",
    "unstack",
    "initial_points",
    "SmoothnessReport",
    "validate_smoothness",
    "ConvexityReport",
    "check_convexity",
    "FeasibilityError",
]

_SET_KINDS = ("l1", "linf", "box")


class FeasibilityError(ValueError):
    """A point violates its feasible set beyond tolerance."""


@dataclass(frozen=True)
class FeasibleSet:
    """One agent's constraint set with exact LMO, projection and membership."""

    kind: str
    dim: int
    radius: float = 0.0
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _SET_KINDS:
            raise ValueError(f"unknown set kind '{self.kind}'")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind in ("l1", "linf"):
            if self.radius <= 0.0:
                raise ValueError("radius must be positive")
        else:
            lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (self.dim,)).copy()
            hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (self.dim,)).copy()
            if (hi < lo).any():
                raise ValueError("inverted box bounds")
            lo.setflags(write=False)
            hi.setflags(write=False)
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    def violation(self, x: np.ndarray) -> float:
        """Nonnegative constraint slack overrun; 0.0 inside the set."""
        x = np.asarray(x, dtype=float)
        if self.kind == "l1":
            return max(0.0, float(np.abs(x).sum() - self.radius))
        if self.kind == "linf":
            return max(0.0, float(np.abs(x).max() - self.radius))
        return max(0.0, float(np.maximum(self.lo - x, x - self.hi).max()))

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return self.violation(x) <= tol

    def lmo(self, direction: np.ndarray) -> LmoResult:
        if self.kind == "l1":
            return lmo_l1(direction, self.radius)
        if self.kind == "linf":
            return lmo_linf(direction, self.radius)
        return lmo_box(direction, self.lo, self.hi)

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "l1":
            return project_l1(x, self.radius)
        if self.kind == "linf":
            return np.clip(x, -self.radius, self.radius)
        return np.clip(x, self.lo, self.hi)

    def diameter(self) -> float:
        if self.kind == "l1":
            return 2.0 * self.radius
        if self.kind == "linf":
            return 2.0 * self.radius * float(np.sqrt(self.dim))
        return float(np.linalg.norm(self.hi - self.lo))

    def center(self) -> np.ndarray:
        if self.kind == "box":
            return (self.lo + self.hi) / 2.0
        return np.zeros(self.dim)

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform-ish sample strictly inside the set."""
        if self.kind == "l1":
            # exponential spacings give a uniform simplex point; random signs
            # and a radial factor u**(1/n) fill the ball
            e = rng.exponential(size=self.dim)
            p = e / e.sum()
            signs = rng.choice((-1.0, 1.0), size=self.dim)
            r = self.radius * rng.random() ** (1.0 / self.dim)
            return signs * p * r
        if self.kind == "linf":
            return rng.uniform(-self.radius, self.radius, size=self.dim)
        return rng.uniform(self.lo, self.hi)


def l1_ball(radius: float, dim: int) -> FeasibleSet:
    return FeasibleSet(kind="l1", dim=dim, radius=radius)


def linf_ball(radius: float, dim: int) -> FeasibleSet:
    return FeasibleSet(kind="linf", dim=dim, radius=radius)


def box(lo, hi, dim: int) -> FeasibleSet:
    return FeasibleSet(kind="box", dim=dim, lo=lo, hi=hi)


@dataclass(frozen=True)
class AggregativeProblem:
    """Immutable problem definition; `metadata` holds recorded diagnostics."""

    sets: tuple[FeasibleSet, ...]
    agg_dim: int
    costs: tuple[Callable, ...]
    grads_x: tuple[Callable, ...]
    grads_z: tuple[Callable, ...]
    agg_maps: tuple[Callable, ...]
    agg_jacs: tuple[Callable, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def n_agents(self) -> int:
        return len(self.sets)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sets)


def make_problem(
    sets,
    agg_dim: int,
    costs,
    grads_x,
    grads_z,
    agg_maps,
    agg_jacs,
    metadata: dict | None = None,
) -> AggregativeProblem:
    """Bundle evaluators after probing shapes at each set's center point."""
    sets = tuple(sets)
    n = len(sets)
    groups = (costs, grads_x, grads_z, agg_maps, agg_jacs)
    if any(len(tuple(g)) != n for g in groups):
        raise ValueError("evaluator lists must match the number of sets")
    problem = AggregativeProblem(
        sets=sets,
        agg_dim=int(agg_dim),
        costs=tuple(costs),
        grads_x=tuple(grads_x),
        grads_z=tuple(grads_z),
        agg_maps=tuple(agg_maps),
        agg_jacs=tuple(agg_jacs),
        metadata=dict(metadata or {}),
    )
    _probe_shapes(problem)
    return problem


def _probe_shapes(problem: AggregativeProblem) -> None:
    d = problem.agg_dim
    for i, s in enumerate(problem.sets):
        xi = s.center()
        phi = np.asarray(problem.agg_maps[i](xi))
        if phi.shape != (d,):
            raise ValueError(f"agent {i}: agg_map returns shape {phi.shape}, want ({d},)")
        jac = np.asarray(problem.agg_jacs[i](xi))
        if jac.shape != (s.dim, d):
            raise ValueError(f"agent {i}: agg_jac returns shape {jac.shape}, want ({s.dim},{d})")
        gx = np.asarray(problem.grads_x[i](xi, phi))
        if gx.shape != (s.dim,):
            raise ValueError(f"agent {i}: grad_x returns shape {gx.shape}, want ({s.dim},)")
        gz = np.asarray(problem.grads_z[i](xi, phi))
        if gz.shape != (d,):
            raise ValueError(f"agent {i}: grad_z returns shape {gz.shape}, want ({d},)")
        c = problem.costs[i](xi, phi)
        if not np.isscalar(c) and np.asarray(c).shape != ():
            raise ValueError(f"agent {i}: cost must return a scalar")


def aggregate(problem: AggregativeProblem, x) -> np.ndarray:
    """delta(x) = mean_i phi_i(x_i)."""
    acc = np.zeros(problem.agg_dim)
    for i, xi in enumerate(x):
        acc += problem.agg_maps[i](xi)
    return acc / problem.n_agents


def global_objective(problem: AggregativeProblem, x) -> float:
    delta = aggregate(problem, x)
    return float(sum(problem.costs[i](xi, delta) for i, xi in enumerate(x)))


def full_gradient(problem: AggregativeProblem, x) -> list[np.ndarray]:
    """Exact per-agent gradient blocks of the global objective."""
    delta = aggregate(problem, x)
    gz_mean = np.zeros(problem.agg_dim)
    for i, xi in enumerate(x):
        gz_mean += problem.grads_z[i](xi, delta)
    gz_mean /= problem.n_agents
    return [
        np.asarray(problem.grads_x[i](xi, delta)) + np.asarray(problem.agg_jacs[i](xi)) @ gz_mean
        for i, xi in enumerate(x)
    ]


def stack(x) -> np.ndarray:
    return np.concatenate([np.asarray(xi, dtype=float).ravel() for xi in x])


def unstack(problem: AggregativeProblem, vec: np.ndarray) -> list[np.ndarray]:
    out = []
    pos = 0
    for d in problem.dims:
        out.append(np.asarray(vec[pos : pos + d], dtype=float))
        pos += d
    if pos != len(vec):
        raise ValueError("vector length does not match problem dims")
    return out


def initial_points(problem: AggregativeProblem, mode: str = "zeros", seed: int = 0) -> list[np.ndarray]:
    """Feasible starting strategies: zeros, a deterministic vertex, or random."""
    if mode == "zeros":
        pts = [s.center() for s in problem.sets]
    elif mode == "vertex":
        pts = [s.lmo(np.ones(s.dim)).vertex for s in problem.sets]
    elif mode == "random":
        rng = np.random.default_rng(seed)
        pts = [s.random_point(rng) for s in problem.sets]
    else:
        raise ValueError(f"unknown init mode '{mode}'")
    for i, (s, p) in enumerate(zip(problem.sets, pts)):
        if not s.contains(p, tol=1e-12):
            raise FeasibilityError(f"agent {i}: initial point infeasible")
    return pts


@dataclass(frozen=True)
class EnergyParams:
    """Quadratic comfort costs plus a price linear in the mean strategy.

    Per agent i: g_i(x_i, z) = k_i ||x_i - chi_i||^2 + <a N z + p0, x_i> with
    the identity aggregation map, so the aggregate is the plain mean strategy.
    chi is one target level per agent (broadcast across coordinates) or a full
    per-agent vector; p0 is a scalar broadcast the same way.
    """

    chi: tuple[float, ...] = (3.0, 5.0, 6.0, 1.0, 2.0)
    radii: tuple[float, ...] = (5.0, 7.0, 9.0, 3.0, 6.0)
    k: tuple[float, ...] | None = None
    a: float = 0.04
    p0: float = 5.0
    set_kind: str = "l1"

    def __post_init__(self):
        n = len(self.chi)
        if n < 1:
            raise ValueError("need at least one agent")
        if len(self.radii) != n:
            raise ValueError("radii length must match chi length")
        if self.k is not None and len(self.k) != n:
            raise ValueError("k length must match chi length")
        if self.a <= 0.0:
            raise ValueError("a must be positive")
        kk = self.k if self.k is not None else (1.0,) * n
        if any(ki <= 0.0 for ki in kk):
            raise ValueError("k entries must be positive")
        if any(r <= 0.0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.set_kind not in ("l1", "linf"):
            raise ValueError(f"unsupported set kind '{self.set_kind}' for this instance")
        object.__setattr__(self, "chi", tuple(float(c) for c in self.chi))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "k", tuple(float(v) for v in kk))

    @property
    def n_agents(self) -> int:
        return len(self.chi)


def make_energy_problem(params: EnergyParams, dim: int) -> AggregativeProblem:
    """Build the energy-management instance at the given per-agent dimension.

    Analytic smoothness constants are recorded into metadata: the z-gradient
    of each cost is a*N*x_i and the x-gradient is linear in z with slope a*N,
    so l1 = l2 = a*N; the identity map gives l3 = c = 1.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = params.n_agents
    a_n = params.a * n
    eye = np.eye(dim)
    p0_vec = np.full(dim, params.p0)

    sets, costs, grads_x, grads_z, agg_maps, agg_jacs = [], [], [], [], [], []
    for i in range(n):
        chi_i = np.full(dim, params.chi[i])
        k_i = params.k[i]
        if params.set_kind == "l1":
            sets.append(l1_ball(params.radii[i], dim))
        else:
            sets.append(linf_ball(params.radii[i], dim))

        def cost(x, z, k_i=k_i, chi_i=chi_i):
            diff = x - chi_i
            return k_i * float(diff @ diff) + float((a_n * z + p0_vec) @ x)

        def grad_x(x, z, k_i=k_i, chi_i=chi_i):
            return 2.0 * k_i * (x - chi_i) + a_n * z + p0_vec

        def grad_z(x, z):
            return a_n * x

        costs.append(cost)
        grads_x.append(grad_x)
        grads_z.append(grad_z)
        agg_maps.append(lambda x: x)
        agg_jacs.append(lambda x: eye)

    return make_problem(
        sets,
        agg_dim=dim,
        costs=costs,
        grads_x=grads_x,
        grads_z=grads_z,
        agg_maps=agg_maps,
        agg_jacs=agg_jacs,
        metadata={"l1": a_n, "l2": a_n, "l3": 1.0, "c": 1.0, "kind": "energy"},
    )


@dataclass(frozen=True)
class SmoothnessReport:
    l1_hat: float
    l2_hat: float
    l3_hat: float
    c_hat: float


def validate_smoothness(
    problem: AggregativeProblem, n_samples: int = 200, seed: int = 0
) -> SmoothnessReport:
    """Estimate Lipschitz constants by sampled difference quotients.

    l1_hat: stacked x-gradient map in the stacked per-agent z argument;
    l2_hat: stacked z-gradient map jointly in (x, z); l3_hat: the aggregation
    maps; c_hat: largest Jacobian operator norm.  When analytic constants are
    recorded in problem metadata, estimates must not exceed them by more than
    1%; the report is stored under metadata["smoothness"].
    """
    rng = np.random.default_rng(seed)
    n, d = problem.n_agents, problem.agg_dim
    z_scale = 1.0 + max(s.diameter() for s in problem.sets)

    def sample_x():
        return [s.random_point(rng) for s in problem.sets]

    def sample_z():
        return rng.normal(scale=z_scale, size=(n, d))

    l1_hat = l2_hat = l3_hat = c_hat = 0.0
    for t in range(n_samples):
        xa, xb = sample_x(), sample_x()
        za, zb = sample_z(), sample_z()
        if t % 3 == 0:
            zb = za.copy()  # pin z so joint quotients can reach the pure-x slope
        g1a = stack([problem.grads_x[i](xa[i], za[i]) for i in range(n)])
        g1b = stack([problem.grads_x[i](xa[i], zb[i]) for i in range(n)])
        dz = float(np.linalg.norm(za - zb))
        if dz > 1e-12:
            l1_hat = max(l1_hat, float(np.linalg.norm(g1a - g1b)) / dz)
        g2a = stack([problem.grads_z[i](xa[i], za[i]) for i in range(n)])
        g2b = stack([problem.grads_z[i](xb[i], zb[i]) for i in range(n)])
        dxz = float(np.sqrt(np.linalg.norm(stack(xa) - stack(xb)) ** 2 + dz**2))
        if dxz > 1e-12:
            l2_hat = max(l2_hat, float(np.linalg.norm(g2a - g2b)) / dxz)
        for i in range(n):
            dx = float(np.linalg.norm(xa[i] - xb[i]))
            if dx > 1e-12:
                quot = float(
                    np.linalg.norm(
                        np.asarray(problem.agg_maps[i](xa[i]))
                        - np.asarray(problem.agg_maps[i](xb[i]))
                    )
                    / dx
                )
                l3_hat = max(l3_hat, quot)
            c_hat = max(c_hat, float(np.linalg.norm(problem.agg_jacs[i](xa[i]), 2)))

    report = SmoothnessReport(l1_hat=l1_hat, l2_hat=l2_hat, l3_hat=l3_hat, c_hat=c_hat)
    for key, est in (("l1", l1_hat), ("l2", l2_hat), ("l3", l3_hat), ("c", c_hat)):
        bound = problem.metadata.get(key)
        if bound is not None and est > bound * 1.01:
            raise ValueError(
                f"estimated {key} = {est:.6g} exceeds recorded bound {bound:.6g} by > 1%"
            )
    problem.metadata["smoothness"] = report
    return report


@dataclass(frozen=True)
class ConvexityReport:
    segments_ok: bool
    worst_violation: float
    min_hessian_eig: float | None


def check_convexity(
    problem: AggregativeProblem,
    n_segments: int = 50,
    seed: int = 0,
    hessian_dim_cap: int = 64,
) -> ConvexityReport:
    """Midpoint-convexity probe plus, for small problems, a Hessian eigencheck.

    The Hessian is finite-differenced from the exact gradient when the total
    decision dimension is at most `hessian_dim_cap`.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_segments):
        xa = [s.random_point(rng) for s in problem.sets]
        xb = [s.random_point(rng) for s in problem.sets]
        mid = [(p + q) / 2.0 for p, q in zip(xa, xb)]
        fa, fb, fm = (global_objective(problem, pt) for pt in (xa, xb, mid))
        scale = 1.0 + abs(fa) + abs(fb)
        worst = max(worst, (fm - (fa + fb) / 2.0) / scale)
    segments_ok = worst <= 1e-10

    total = sum(problem.dims)
    min_eig = None
    if total <= hessian_dim_cap:
        x0 = stack([s.center() for s in problem.sets])
        h = 1e-5
        hess = np.zeros((total, total))
        for p in range(total):
            xp, xm = x0.copy(), x0.copy()
            xp[p] += h
            xm[p] -= h
            gp = stack(full_gradient(problem, unstack(problem, xp)))
            gm = stack(full_gradient(problem, unstack(problem, xm)))
            hess[:, p] = (gp - gm) / (2.0 * h)
        hess = (hess + hess.T) / 2.0
        min_eig = float(np.linalg.eigvalsh(hess).min())
    return ConvexityReport(
        segments_ok=segments_ok, worst_violation=worst, min_hessian_eig=min_eig
    )
