"""Per-agent subproblem oracles: linear minimization and Euclidean projection.

Every linear-minimization oracle (LMO) returns its vertex together with the
attained inner product and the wall time of the call, measured with the
monotonic nanosecond clock, so per-subproblem cost is comparable across
solvers.  `bench_oracle` wraps any oracle listed in `BENCH_ORACLES` with a
warmup + median/percentile protocol on seeded Gaussian inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LmoResult",
    "BenchResult",
    "lmo_l1",
    "lmo_linf",
    "lmo_box",
    "project_l1",
    "project_l1_active_set",
    "bench_oracle",
    "BENCH_ORACLES",
]


@dataclass(frozen=True)
class LmoResult:
    """Minimizer of a linear form over one feasible set."""

    vertex: np.ndarray
    inner_product: float
    elapsed_ns: int


@dataclass(frozen=True)
class BenchResult:
    """Timing summary for one oracle at one dimension."""

    oracle: str
    n: int
    trials: int
    median_ns: int
    p10_ns: int
    p90_ns: int
    seed: int


def lmo_l1(direction: np.ndarray, radius: float) -> LmoResult:
    """Minimize <direction, s> over the l1 ball of the given radius.

    The minimum sits on a signed axis vertex: -radius * sign(d_j) * e_j for a
    coordinate j of maximal |d_j|, lowest index on ties.  A zero direction
    returns -radius * e_0, a valid minimizer of the zero form.
    """
    t0 = time.perf_counter_ns()
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    d = np.asarray(direction, dtype=float)
    j = int(np.argmax(np.abs(d)))
    sgn = 1.0 if d[j] >= 0.0 else -1.0
    s = np.zeros_like(d)
    s[j] = -radius * sgn
    return LmoResult(s, float(d[j] * s[j]), time.perf_counter_ns() - t0)


def lmo_linf(direction: np.ndarray, radius: float) -> LmoResult:
    """Minimize <direction, s> over the l-infinity ball.

    Closed form -radius * sign(direction) per coordinate, with sign(0) := +1
    so the output is always a vertex of the cube.
    """
    t0 = time.perf_counter_ns()
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    d = np.asarray(direction, dtype=float)
    s = np.where(d >= 0.0, -radius, radius)
    return LmoResult(s, float(d @ s), time.perf_counter_ns() - t0)


def lmo_box(direction: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> LmoResult:
    """Minimize <direction, s> over the box [lo, hi]: lo where d > 0, hi otherwise."""
    t0 = time.perf_counter_ns()
    d = np.asarray(direction, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), d.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), d.shape)
    if (hi < lo).any():
        raise ValueError("inverted box bounds")
    s = np.where(d > 0.0, lo, hi)
    return LmoResult(s, float(d @ s), time.perf_counter_ns() - t0)


def project_l1(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball, by sort and soft-threshold.

    O(n log n): interior points pass through untouched; otherwise the
    magnitudes are sorted once to locate the threshold theta with
    sum(max(|x| - theta, 0)) = radius, and the result is the sign-preserving
    shrinkage of x by theta.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    if a.sum() <= radius:
        return x.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, u.size + 1)
    # largest prefix whose smallest kept magnitude still exceeds the threshold
    rho = int(np.nonzero(u * ks > css - radius)[0][-1])
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(x) * np.maximum(a - theta, 0.0)


def project_l1_active_set(
    x: np.ndarray,
    radius: float,
    tol: float = 1e-14,
    max_major: int | None = None,
) -> np.ndarray:
    """Euclidean projection onto the l1 ball by a generic active-set method.

    Least-distance formulation over the ball's 2n signed axis vertices: a
    working set of vertices is grown one per major step, and each major step
    runs Wolfe-style minor cycles that solve the equality-constrained
    least-squares system over the current hull (dense KKT solve) and walk
    back dropping vertices whose weight would turn negative.  Deliberately
    ignores the separable structure the sort-based path exploits; cost grows
    superlinearly with the support of the projection.  Benchmark path only --
    the optimization loops always use `project_l1`.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    if np.abs(x).sum() <= radius:
        return x.copy()
    n = x.size
    if max_major is None:
        max_major = 8 * n + 64

    j0 = int(np.argmax(np.abs(x)))
    active: list[tuple[int, float]] = [(j0, 1.0 if x[j0] >= 0.0 else -1.0)]
    cols = np.zeros((n, 1))
    cols[j0, 0] = radius * active[0][1]
    gram = cols.T @ cols
    lam = np.array([1.0])
    y = cols @ lam
    scale = max(1.0, float(x @ x))

    for _ in range(max_major):
        g = y - x
        j = int(np.argmax(np.abs(g)))
        sgn = -1.0 if g[j] > 0.0 else 1.0
        gap = float(g @ y) - radius * sgn * g[j]
        if gap <= tol * scale:
            break
        if (j, sgn) in active:
            break  # re-proposed vertex: at the numerical floor
        w = np.zeros((n, 1))
        w[j, 0] = radius * sgn
        gram = np.block([[gram, cols.T @ w], [w.T @ cols, w.T @ w]])
        cols = np.hstack([cols, w])
        active.append((j, sgn))
        lam = np.append(lam, 0.0)

        while True:
            m = len(active)
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = gram
            kkt[:m, m] = 1.0
            kkt[m, :m] = 1.0
            rhs = np.append(cols.T @ x, 1.0)
            try:
                lam_new = np.linalg.solve(kkt, rhs)[:m]
            except np.linalg.LinAlgError:
                lam_new = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:m]
            if (lam_new >= -1e-12).all():
                lam = np.maximum(lam_new, 0.0)
                break
            # walk back toward the last feasible weights; drop what hits zero
            diff = lam_new - lam
            bad = lam_new < -1e-12
            step = float(np.min(lam[bad] / (lam[bad] - lam_new[bad])))
            lam = lam + step * diff
            keep = lam > 1e-12
            if keep.all():
                keep[int(np.argmin(lam))] = False
            active = [a for a, k in zip(active, keep) if k]
            cols = cols[:, keep]
            gram = gram[np.ix_(keep, keep)]
            lam = lam[keep]
            lam = lam / lam.sum()
        y = cols @ lam
    return y


def _bench_lmo_l1(x: np.ndarray) -> None:
    lmo_l1(x, 1.0)


def _bench_lmo_linf(x: np.ndarray) -> None:
    lmo_linf(x, 1.0)


def _bench_lmo_box(x: np.ndarray) -> None:
    lmo_box(x, -1.0, 1.0)


def _bench_project_l1(x: np.ndarray, radius: float) -> None:
    project_l1(x, radius)


def _bench_project_l1_slow(x: np.ndarray, radius: float) -> None:
    project_l1_active_set(x, radius)


BENCH_ORACLES = {
    "lmo_l1": _bench_lmo_l1,
    "lmo_linf": _bench_lmo_linf,
    "lmo_box": _bench_lmo_box,
    "project_l1": _bench_project_l1,
    "project_l1_slow": _bench_project_l1_slow,
}

_WARMUP_CALLS = 10


def bench_oracle(oracle: str, n: int, trials: int, seed: int) -> BenchResult:
    """Median / p10 / p90 wall time of one oracle over seeded Gaussian inputs.

    Ten warmup calls precede measurement.  Projection benches set
    radius = ||x||_1 / 4 so every input sits strictly outside the ball and the
    non-trivial path runs (an interior input short-circuits to a copy); LMO
    benches use radius 1, which does not affect the scan cost.
    """
    if oracle not in BENCH_ORACLES:
        raise ValueError(f"unknown oracle '{oracle}'")
    if n < 1:
        raise ValueError("n must be >= 1")
    if trials < 10:
        raise ValueError("trials must be >= 10")
    fn = BENCH_ORACLES[oracle]
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((_WARMUP_CALLS + trials, n))
    is_projection = oracle.startswith("project")
    radii = np.abs(xs).sum(axis=1) / 4.0 if is_projection else None

    times = np.empty(trials, dtype=np.int64)
    for i, xi in enumerate(xs):
        if is_projection:
            t0 = time.perf_counter_ns()
            fn(xi, radii[i])
            dt = time.perf_counter_ns() - t0
        else:
            t0 = time.perf_counter_ns()
            fn(xi)
            dt = time.perf_counter_ns() - t0
        if i >= _WARMUP_CALLS:
            times[i - _WARMUP_CALLS] = dt
    return BenchResult(
        oracle=oracle,
        n=n,
        trials=trials,
        median_ns=int(np.median(times)),
        p10_ns=int(np.percentile(times, 10)),
        p90_ns=int(np.percentile(times, 90)),
        seed=seed,
    )
