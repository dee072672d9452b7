from functools import lru_cache

import numpy as np
import pytest

from conecurv.energy import ProblemData
from conecurv.geometry import Divisor, build_geometry, build_icosphere

TETRAHEDRAL = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]


@lru_cache(maxsize=None)
def reference_geometry(level: int, beta: float = -0.7):
    mesh = build_icosphere(level)
    return build_geometry(mesh, Divisor.snapped(mesh, [(d, beta) for d in TETRAHEDRAL]))


@lru_cache(maxsize=None)
def _problem(level: int, K: str):
    geom = reference_geometry(level)
    Kf = geom.mesh.vertices[:, 2] - 1.0 if K == "z3" else np.array(geom.kappa)
    return ProblemData(geom, Kf, 0.0)


def reference_problem(level: int = 4, lam: float = 0.0, K: str = "z3") -> ProblemData:
    """Four cones of order -0.7 at tetrahedral vertices; ``K = x3 - 1`` or the fixture curvature."""
    return _problem(level, K).with_lambda(lam)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
