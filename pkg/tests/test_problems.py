"""Feasible sets, problem family, and analytic validation tests."""

import numpy as np
import pytest

from aggfw.problems import (
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
    stack,
    unstack,
    validate_smoothness,
)


def chi_points(problem):
    chis = (3.0, 5.0, 6.0, 1.0, 2.0)
    return [np.full(problem.dims[i], c) for i, c in enumerate(chis)]


def test_feasible_set_l1_membership():
    s = l1_ball(2.0, 3)
    assert s.contains(np.array([1.0, -0.5, 0.25]))
    assert not s.contains(np.array([2.0, 0.5, 0.0]))
    assert s.violation(np.array([2.0, 0.5, 0.0])) == pytest.approx(0.5)


def test_feasible_set_linf_and_box():
    assert linf_ball(1.0, 2).contains(np.array([1.0, -1.0]))
    b = box(np.array([0.0, -1.0]), np.array([2.0, 1.0]), 2)
    assert b.contains(np.array([1.0, 0.0]))
    assert b.violation(np.array([3.0, 0.0])) == pytest.approx(1.0)


def test_feasible_set_diameters():
    assert l1_ball(3.0, 4).diameter() == pytest.approx(6.0)
    assert linf_ball(2.0, 4).diameter() == pytest.approx(2.0 * 2.0 * 2.0)
    assert box(np.zeros(2), np.array([3.0, 4.0]), 2).diameter() == pytest.approx(5.0)


def test_feasible_set_random_points_feasible():
    rng = np.random.default_rng(17)
    sets = (
        l1_ball(2.5, 6),
        linf_ball(1.5, 4),
        box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]), 2),
    )
    for s in sets:
        for _ in range(25):
            assert s.contains(s.random_point(rng), tol=1e-12)


def test_feasible_set_projection_delegates():
    s = l1_ball(2.0, 2)
    assert np.allclose(s.project(np.array([3.0, -1.0])), [2.0, 0.0])
    si = linf_ball(1.0, 2)
    assert np.allclose(si.project(np.array([3.0, -0.5])), [1.0, -0.5])


def test_objective_value_at_reference_point():
    # per coordinate: quadratic terms vanish at the targets, leaving the price
    # term (0.2 * 3.4 + 5) * 17 = 96.56 in one dimension
    p = make_energy_problem(EnergyParams(), 1)
    assert global_objective(p, chi_points(p)) == pytest.approx(96.56, abs=1e-12)
    # separable across coordinates: 16x the one-dimensional value
    p16 = make_energy_problem(EnergyParams(), 16)
    assert global_objective(p16, chi_points(p16)) == pytest.approx(16 * 96.56, abs=1e-9)


def test_aggregate_is_identity_mean():
    p = make_energy_problem(EnergyParams(), 1)
    assert aggregate(p, chi_points(p)) == pytest.approx(np.array([3.4]))


def test_full_gradient_at_origin():
    # block 1 at x=0: 2*1*(0-3) + 0.2*0 + 5 + mean-z-gradient 0 = -1
    p = make_energy_problem(EnergyParams(), 1)
    zeros = [np.zeros(1) for _ in range(5)]
    g = full_gradient(p, zeros)
    assert g[0] == pytest.approx(np.array([-1.0]))
    assert g[1] == pytest.approx(np.array([-5.0]))


def test_gradients_match_finite_differences():
    p = make_energy_problem(EnergyParams(), 3)
    rng = np.random.default_rng(12)
    xs = [s.random_point(rng) for s in p.sets]
    g = stack(full_gradient(p, xs))
    flat = stack(xs)
    h = 1e-6
    fd = np.zeros_like(flat)
    for j in range(flat.size):
        e = np.zeros_like(flat)
        e[j] = h
        fd[j] = (
            global_objective(p, unstack(p, flat + e))
            - global_objective(p, unstack(p, flat - e))
        ) / (2 * h)
    assert np.abs(g - fd).max() / (1.0 + np.abs(g).max()) < 1e-6


def test_energy_params_validation():
    with pytest.raises(ValueError, match="radii"):
        EnergyParams(radii=(5.0, 7.0, 9.0, 3.0, -6.0))
    with pytest.raises(ValueError, match="a must"):
        EnergyParams(a=0.0)
    with pytest.raises(ValueError, match="k length"):
        EnergyParams(k=(1.0, 1.0))
    with pytest.raises(ValueError, match="set kind"):
        EnergyParams(set_kind="l2")


def test_make_problem_probes_shapes():
    with pytest.raises(ValueError, match="agent 0"):
        make_problem(
            sets=[l1_ball(1.0, 2)],
            agg_dim=2,
            costs=[lambda x, z: float(x @ x)],
            grads_x=[lambda x, z: np.zeros(3)],  # wrong shape on purpose
            grads_z=[lambda x, z: np.zeros(2)],
            agg_maps=[lambda x: x],
            agg_jacs=[lambda x: np.eye(2)],
        )


def test_initial_points_modes():
    p = make_energy_problem(EnergyParams(), 4)
    zeros = initial_points(p, mode="zeros", seed=0)
    assert all(np.array_equal(z, np.zeros(4)) for z in zeros)
    vert = initial_points(p, mode="vertex", seed=0)
    for v, s in zip(vert, p.sets):
        assert s.contains(v, tol=1e-12)
        assert np.abs(v).sum() == pytest.approx(s.radius)
    rand = initial_points(p, mode="random", seed=3)
    assert all(s.contains(r, tol=1e-12) for r, s in zip(rand, p.sets))
    assert not np.allclose(stack(rand), 0.0)
    with pytest.raises(ValueError):
        initial_points(p, mode="middle", seed=0)


def test_stack_unstack_round_trip():
    p = make_energy_problem(EnergyParams(), 3)
    rng = np.random.default_rng(2)
    xs = [s.random_point(rng) for s in p.sets]
    assert all(np.array_equal(a, b) for a, b in zip(unstack(p, stack(xs)), xs))
    with pytest.raises(ValueError):
        unstack(p, np.zeros(7))


def test_smoothness_validation_accepts_recorded_bounds():
    p = make_energy_problem(EnergyParams(), 2)
    report = validate_smoothness(p, n_samples=60, seed=1)
    assert report.l1_hat <= p.metadata["l1"] * 1.01
    assert report.l2_hat <= p.metadata["l2"] * 1.01
    assert report.l3_hat <= 1.01
    assert report.c_hat <= 1.01
    assert p.metadata["smoothness"] is report


def test_smoothness_validation_rejects_understated_bound():
    p = make_energy_problem(EnergyParams(), 2)
    p.metadata["l1"] = 1e-6  # deliberately too small for the actual cost
    with pytest.raises(ValueError, match="l1"):
        validate_smoothness(p, n_samples=60, seed=1)


def test_convexity_check_passes_on_energy_family():
    p = make_energy_problem(EnergyParams(), 2)
    report = check_convexity(p, n_segments=40, seed=2)
    assert report.segments_ok
    assert report.min_hessian_eig is not None
    assert report.min_hessian_eig > 0.0  # strongly convex quadratic


def test_convexity_skips_hessian_when_large():
    p = make_energy_problem(EnergyParams(), 16)  # total dimension 80 > cap
    report = check_convexity(p, n_segments=10, seed=2)
    assert report.min_hessian_eig is None
    assert report.segments_ok


def test_feasible_set_rejects_bad_construction():
    with pytest.raises(ValueError):
        l1_ball(1.0, 0)
    with pytest.raises(ValueError):
        l1_ball(-2.0, 3)
    with pytest.raises(ValueError):
        FeasibleSet(kind="simplex", dim=3, radius=1.0)
    with pytest.raises(ValueError):
        box(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 2)
