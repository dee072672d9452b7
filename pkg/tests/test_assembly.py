import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conecurv.assembly import (
    AssemblyError,
    ShiftedSolver,
    assemble_mass,
    assemble_stiffness,
    dmp_check,
    dump_coo,
    shifted_factor,
    shifted_solve,
)
from conecurv.geometry import Divisor, TriMesh, build_geometry, build_icosphere

from conftest import reference_geometry, reference_problem


def _angle(a, b, c):
    """Interior angle at ``a`` of triangle abc."""
    u, v = b - a, c - a
    return math.acos(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def test_stiffness_hand_fixture():
    P = np.array([[0, 0, 0], [2, 0, 0], [0.5, 1, 0], [2.2, 1.3, 0]], dtype=float)
    F = np.array([[0, 1, 2], [1, 3, 2]])
    S = assemble_stiffness(TriMesh(P, F)).toarray()
    cot = lambda t: 1.0 / math.tan(t)
    expected = np.zeros((4, 4))

    def add(i, j, opp_angles):
        w = 0.5 * sum(cot(t) for t in opp_angles)
        expected[i, j] -= w
        expected[j, i] -= w
        expected[i, i] += w
        expected[j, j] += w

    add(0, 1, [_angle(P[2], P[0], P[1])])
    add(0, 2, [_angle(P[1], P[0], P[2])])
    add(1, 2, [_angle(P[0], P[1], P[2]), _angle(P[3], P[1], P[2])])
    add(1, 3, [_angle(P[2], P[1], P[3])])
    add(2, 3, [_angle(P[1], P[2], P[3])])
    assert np.allclose(S, expected, atol=1e-14)


@pytest.mark.parametrize("level", [0, 2, 4])
def test_stiffness_kills_constants(level):
    S = assemble_stiffness(build_icosphere(level))
    assert np.max(np.abs(S @ np.ones(S.shape[0]))) <= 1e-12
    assert abs(S - S.T).max() <= 1e-15


def test_stiffness_first_harmonic_converges():
    target = 8 * math.pi / 3
    errs = []
    for level in range(2, 6):
        mesh = build_icosphere(level)
        x3 = mesh.vertices[:, 2]
        errs.append(abs(x3 @ (assemble_stiffness(mesh) @ x3) - target))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    assert all(r > 3.5 for r in ratios)
    # Richardson extrapolation from the two finest levels
    mesh4, mesh5 = build_icosphere(4), build_icosphere(5)
    e4 = mesh4.vertices[:, 2] @ (assemble_stiffness(mesh4) @ mesh4.vertices[:, 2])
    e5 = mesh5.vertices[:, 2] @ (assemble_stiffness(mesh5) @ mesh5.vertices[:, 2])
    assert (4 * e5 - e4) / 3 == pytest.approx(target, rel=1e-5)


def test_degenerate_triangle_named():
    P = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    with pytest.raises(AssemblyError, match="face 0"):
        assemble_stiffness(TriMesh(P, np.array([[0, 1, 2]])))


def test_mass_round_sphere_and_single_cone():
    m = assemble_mass(build_geometry(build_icosphere(4), Divisor()))
    assert m.sum() == pytest.approx(4 * math.pi, rel=5e-3)
    m5 = assemble_mass(build_geometry(build_icosphere(5), Divisor(((5, -0.5),))))
    assert m5.sum() == pytest.approx(8 * math.pi, rel=1e-3)


@pytest.mark.parametrize("level", [1, 3, 4])
def test_mass_positive(level):
    assert np.all(assemble_mass(reference_geometry(level)) > 0)


def test_shifted_solve_cases(rng):
    p = reference_problem(3)
    S, m = p.S, p.m
    for c in (0.5, 2.0):
        assert np.allclose(shifted_solve(S, m, c, np.ones(len(m))), 1.0 / c, atol=1e-12)
        assert np.all(shifted_solve(S, m, c, np.zeros(len(m))) == 0.0)
        rhs = rng.standard_normal(len(m))
        u = shifted_solve(S, m, c, rhs)
        A = S + sp.diags(c * m)
        assert np.linalg.norm(A @ u - m * rhs) <= 1e-10 * np.linalg.norm(m * rhs)
        assert shifted_factor(S, m, c).residual(u, rhs) <= 1e-10


def test_shifted_factor_cached():
    p = reference_problem(2)
    assert shifted_factor(p.S, p.m, 1.5) is shifted_factor(p.S, p.m, 1.5)
    with pytest.raises(ValueError):
        ShiftedSolver(p.S, p.m, 0.0)


def test_dmp_level3():
    p = reference_problem(3)
    rep = dmp_check(p.S, p.m, 1.0, trials=100, rng=np.random.default_rng(0))
    assert rep.ok
    assert rep.min_entry >= -1e-12 and rep.min_entry_positive_rhs > 0
    assert rep.positive_offdiagonals == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 20.0), st.integers(0, 2**32 - 1))
def test_shifted_solve_is_monotone(c, seed):
    # f <= g pointwise implies L^-1 f <= L^-1 g
    p = reference_problem(2)
    r = np.random.default_rng(seed)
    f = r.standard_normal(len(p.m))
    g = f + r.random(len(p.m))
    d = shifted_solve(p.S, p.m, c, g) - shifted_solve(p.S, p.m, c, f)
    assert d.min() >= -1e-12


def test_dump_coo_roundtrip():
    S = assemble_stiffness(build_icosphere(1))
    rows = [ln.split() for ln in dump_coo(S).splitlines()]
    T = sp.coo_matrix(([float(v) for _, _, v in rows], ([int(i) for i, _, _ in rows], [int(j) for _, j, _ in rows])),
                      shape=S.shape)
    assert (T - S).count_nonzero() == 0
