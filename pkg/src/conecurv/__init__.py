"""Conformal metrics with prescribed curvature on the sphere with conical
singularities: discretization, solvers for both solution branches, and an
experiment harness."""

from .config import RunConfig, load_config
from .energy import HypothesisError, ProblemData, energy, gradient, residual_norm
from .geometry import Divisor, build_geometry, build_icosphere
from .solver import (
    Tolerances,
    find_minimizer,
    monotone_iteration,
    mountain_pass,
    nonexistence_probe,
    solve_convex,
    sweep_lambda,
)

__all__ = [
    "Divisor",
    "HypothesisError",
    "ProblemData",
    "RunConfig",
    "Tolerances",
    "build_geometry",
    "build_icosphere",
    "energy",
    "find_minimizer",
    "gradient",
    "load_config",
    "monotone_iteration",
    "mountain_pass",
    "nonexistence_probe",
    "residual_norm",
    "solve_convex",
    "sweep_lambda",
]
