import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conecurv.energy import residual_norm, residual_vector, solution_identity_check
from conecurv.solver import (
    Bracket,
    BracketError,
    MountainPassError,
    OrderingViolation,
    SweepConfig,
    Tolerances,
    build_lower_solution,
    find_minimizer,
    monotone_iteration,
    mountain_pass,
    newton,
    nonexistence_probe,
    solve_convex,
    sweep_lambda,
)

from conftest import reference_problem


def test_convex_fixture_recovers_zero(rng):
    p = reference_problem(3, K="kappa")
    rep = solve_convex(p, rng.uniform(-2, 2, p.geom.n_vertices))
    assert rep.converged and np.max(np.abs(rep.u)) <= 1e-8


def test_convex_uniqueness_from_random_starts(rng):
    p = reference_problem(3, lam=-0.5)
    sols = [solve_convex(p, rng.uniform(-2, 2, p.geom.n_vertices)) for _ in range(10)]
    assert all(s.converged for s in sols)
    U = np.array([s.u for s in sols])
    assert np.max(np.abs(U[:, None, :] - U[None, :, :])) <= 1e-6
    assert sols[0].eig_min > 0
    assert solution_identity_check(p, sols[0].u) <= 1e-6 * 2 * np.pi * abs(p.chi)


def test_convex_rejects_positive_lambda():
    with pytest.raises(ValueError):
        solve_convex(reference_problem(2, lam=0.1))


def test_lower_solution_properties():
    p = reference_problem(3, K="kappa")
    phi = build_lower_solution(p)
    assert np.all(residual_vector(p, phi) < 0)
    assert np.all(phi < 0)


def test_lower_solution_needs_negative_chi():
    from conecurv.energy import ProblemData
    from conecurv.geometry import Divisor, build_geometry, build_icosphere
    mesh = build_icosphere(2)
    geom = build_geometry(mesh, Divisor(((5, -0.5),)))
    with pytest.raises(BracketError):
        build_lower_solution(ProblemData(geom, mesh.vertices[:, 2] - 1, 0.0))


def test_monotone_iteration_on_fixture():
    p = reference_problem(3, K="kappa")
    phi = build_lower_solution(p)
    rep = monotone_iteration(p, Bracket(phi, np.zeros(p.geom.n_vertices)))
    assert rep.converged
    assert rep.info["ordering_violations"] == 0 and rep.info["ordering_checks"] == 3 * rep.iterations
    assert np.max(np.abs(rep.u)) <= 10 * Tolerances().mono_tol
    assert rep.residual <= 10 * Tolerances().mono_tol


@settings(max_examples=8, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 2.0))
def test_monotone_ordering_random_brackets(top, extra):
    # psi = top (any positive constant is an upper solution when K = kappa < 0)
    p = reference_problem(2, K="kappa")
    phi = build_lower_solution(p) - extra
    psi = np.full(p.geom.n_vertices, top)
    rep = monotone_iteration(p, Bracket(phi, psi), max_iter=60)
    assert rep.info["ordering_violations"] == 0


def test_monotone_detects_bad_shift():
    p = reference_problem(2, K="kappa")
    phi = build_lower_solution(p)
    psi = np.full(p.geom.n_vertices, 2.0)
    # a shift far too small breaks monotonicity of G and the chain
    with pytest.raises(OrderingViolation):
        monotone_iteration(p, Bracket(phi, psi), c=1e-3, max_iter=50)


def test_bracket_check_rejects_swapped():
    p = reference_problem(2, K="kappa")
    phi = build_lower_solution(p)
    with pytest.raises(BracketError):
        Bracket(np.zeros_like(phi), phi).check(p)


def test_minimizer_and_mountain_pass():
    p = reference_problem(3, lam=0.2)
    upper = find_minimizer(reference_problem(3, lam=0.25))
    u_min = find_minimizer(p, upper=upper)
    assert u_min.converged and u_min.eig_min > 0
    assert u_min.info["strictly_inside"]
    saddle = mountain_pass(p, u_min)
    assert saddle.converged and residual_norm(p, saddle.u) <= 1e-10
    assert saddle.energy > u_min.energy
    assert np.max(np.abs(saddle.u - u_min.u)) >= 1e-3
    assert saddle.eig_min <= Tolerances().eig_tol


def test_minimizer_continuity_at_zero():
    u0 = solve_convex(reference_problem(3, lam=0.0)).u
    u_small = find_minimizer(reference_problem(3, lam=1e-7)).u
    assert np.max(np.abs(u_small - u0)) <= 1e-6


def test_mountain_pass_needs_positive_lambda():
    p = reference_problem(2, lam=-0.1)
    with pytest.raises(MountainPassError):
        mountain_pass(p, solve_convex(p))


def test_sweep_coarse():
    p = reference_problem(2)
    d = sweep_lambda(p, SweepConfig(step=0.1))
    assert 0 < d.lambda_star < 2
    b0, b1 = d.branch(0), d.branch(1)
    assert all(r.converged for r in b0 + b1)
    mus = [r.eig_min for r in b0]
    assert all(b < a for a, b in zip(mus[-5:], mus[-4:]))
    for r1 in b1:
        r0 = next(r for r in b0 if r.lam == r1.lam)
        assert r1.energy > r0.energy
    header = d.to_csv().splitlines()[0]
    assert header == "lambda,branch,energy,u_mean,eig_min,converged"


def test_probe_identity_obstruction():
    # beyond -min K the weight K_lambda is nonnegative everywhere
    p = reference_problem(2, lam=2.5)
    rep = nonexistence_probe(p, starts=5, seed=1)
    assert rep.converged == 0 and rep.k_lambda_nonnegative
    assert "no solution can exist" in rep.identity_obstruction


def test_probe_negative_control():
    p = reference_problem(2, lam=-0.5)
    rep = nonexistence_probe(p, starts=5, seed=1, amplitude=1.0)
    assert rep.converged > 0


def test_newton_residual_merit_reaches_saddle():
    p = reference_problem(2, lam=0.2)
    u_min = find_minimizer(p)
    saddle = mountain_pass(p, u_min)
    res = newton(p, saddle.u + 1e-3, merit="residual")
    assert res.converged
    res = newton(p, saddle.u, merit="energy")
    assert res.status in ("converged", "indefinite")
