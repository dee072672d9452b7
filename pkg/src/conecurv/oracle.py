"""Dense reference solver for coarse meshes.

Everything here is written against dense numpy arrays and shares no code with
the sparse solver beyond the mesh and the lumped mass: the stiffness matrix is
rebuilt from hat-function gradients, and critical points are found by flows
rather than Newton.  Minimizers come from a preconditioned gradient flow on
the energy; index-1 saddles come from gentlest-ascent dynamics, which reverses
the flow along the softest Hessian direction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .energy import EnergyReport, ProblemData
from .solver import SolveReport

MAX_ORACLE_VERTICES = 64


def dense_stiffness(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """``A_ij = sum_T |T| grad(phi_i) . grad(phi_j)`` on the flat triangles."""
    n = len(vertices)
    A = np.zeros((n, n))
    for f in faces:
        P = vertices[f]
        e1, e2 = P[1] - P[0], P[2] - P[0]
        G = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
        # gradients of phi_1, phi_2 in the (e1, e2) frame; phi_0 = 1 - phi_1 - phi_2
        Ginv = np.linalg.inv(G)
        D = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        area = 0.5 * np.sqrt(np.linalg.det(G))
        A[np.ix_(f, f)] += area * D @ Ginv @ D.T
    return A


class DenseProblem:
    """Energy, gradient and Hessian of the discrete functional in dense form."""

    def __init__(self, p: ProblemData):
        mesh = p.geom.mesh
        self.S = dense_stiffness(mesh.vertices, mesh.faces)
        self.m = np.array(p.m, dtype=float)
        self.mk = self.m * np.asarray(p.kappa, dtype=float)
        self.mK = self.m * (np.asarray(p.K, dtype=float) + p.lam)
        self.chi = p.chi
        self.lam = p.lam
        # Sobolev metric used to precondition the flows
        self.P = self.S + np.diag(self.m)

    def energy(self, u):
        return float(u @ self.S @ u + 2.0 * self.mk @ u - self.mK @ np.exp(2.0 * u))

    def residual(self, u):
        return self.S @ u + self.mk - self.mK * np.exp(2.0 * u)

    def residual_norm(self, u):
        r = self.residual(u)
        return float(math.sqrt(np.sum(r * r / self.m)))

    def hessian(self, u):
        return 2.0 * (self.S - np.diag(2.0 * self.mK * np.exp(2.0 * u)))

    def report(self, u) -> EnergyReport:
        H = 0.5 * self.hessian(u)
        mu = float(sla.eigh(H, np.diag(self.m), eigvals_only=True)[0])
        g = 2.0 * self.residual(u)
        return EnergyReport(
            value=self.energy(u),
            gradient_norm=float(math.sqrt(np.sum(g * g / self.m))),
            eig_min=mu,
            residual_norm=self.residual_norm(u),
            identity_gap=abs(float(self.mK @ np.exp(2.0 * u)) - 2.0 * math.pi * self.chi),
        )


@dataclass
class FlowResult:
    u: np.ndarray
    converged: bool
    steps: int
    kind: str


def gradient_flow(d: DenseProblem, u0: np.ndarray, tol: float = 1e-10, max_steps: int = 20000,
                  blowup: float = 30.0) -> FlowResult:
    """``u' = -P^-1 dE(u)`` with step control by energy decrease."""
    u = np.array(u0, dtype=float)
    cho = sla.cho_factor(d.P)
    tau = 1.0
    E = d.energy(u)
    for k in range(max_steps):
        r = d.residual(u)
        if math.sqrt(np.sum(r * r / d.m)) <= tol:
            return FlowResult(u, True, k, "min")
        step = -sla.cho_solve(cho, 2.0 * r)
        slope = 2.0 * float(r @ step)
        rn = d.residual_norm(u)
        while True:
            trial = u + tau * step
            Et = d.energy(trial) if np.max(np.abs(trial)) < blowup else np.inf
            if Et <= E + 1e-4 * tau * slope:
                break
            # energy decrease below round-off: settle for a smaller residual
            if abs(slope) < 1e-12 * (1.0 + abs(E)) and np.isfinite(Et) and d.residual_norm(trial) < rn:
                break
            tau *= 0.5
            if tau < 1e-12:
                return FlowResult(u, False, k, "min")
        u, E = trial, Et
        tau = min(2.0 * tau, 1.0)
    return FlowResult(u, False, max_steps, "min")


def gentlest_ascent(d: DenseProblem, u0: np.ndarray, tol: float = 1e-10, max_steps: int = 20000,
                    blowup: float = 30.0) -> FlowResult:
    """``u' = -(I - 2 v v^T P) P^-1 dE(u)`` with ``v`` the softest direction of
    the Hessian in the ``P`` metric; index-1 saddles are its stable points."""
    u = np.array(u0, dtype=float)
    for k in range(max_steps):
        r = d.residual(u)
        if math.sqrt(np.sum(r * r / d.m)) <= tol:
            return FlowResult(u, True, k, "saddle")
        w, V = sla.eigh(d.hessian(u), d.P)
        v = V[:, 0]
        g = sla.solve(d.P, 2.0 * r, assume_a="pos")
        g_reflected = g - 2.0 * (v @ d.P @ g) * v
        tau = 0.5 / max(abs(w[0]), abs(w[-1]))
        u = u - tau * g_reflected
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blowup:
            return FlowResult(u, False, k, "saddle")
    return FlowResult(u, False, max_steps, "saddle")


@dataclass
class OracleResult:
    clusters: list[SolveReport]
    flows: int
    discarded: int
    counts: list[int] = field(default_factory=list)


def _cluster(found: list[FlowResult], dist: float) -> tuple[list[FlowResult], list[int]]:
    reps, counts = [], []
    for f in found:
        for i, r in enumerate(reps):
            if np.max(np.abs(r.u - f.u)) < dist:
                counts[i] += 1
                break
        else:
            reps.append(f)
            counts.append(1)
    return reps, counts


def dense_oracle(p: ProblemData, starts: int = 10, seed: int = 0, tol: float = 1e-10,
                 cluster_dist: float = 1e-6, amplitude: float = 1.0, saddle_starts: int = 4) -> OracleResult:
    """Critical points of the discrete energy found by flows from seeded random
    starts; limits closer than ``cluster_dist`` in max norm are merged.

    For ``lambda > 0`` each minimizer also seeds ``saddle_starts`` gentlest-ascent
    runs from random nonnegative kicks.
    """
    if p.geom.n_vertices > MAX_ORACLE_VERTICES:
        raise ValueError(f"dense oracle is for meshes with at most {MAX_ORACLE_VERTICES} vertices")
    t0 = time.perf_counter()
    d = DenseProblem(p)
    rng = np.random.default_rng(seed)
    n = p.geom.n_vertices
    flows = discarded = 0
    found: list[FlowResult] = []
    for _ in range(starts):
        res = gradient_flow(d, rng.uniform(-amplitude, amplitude, n), tol)
        flows += 1
        if res.converged:
            found.append(res)
        else:
            discarded += 1
    minima, _ = _cluster(found, cluster_dist)
    if p.lam > 0:
        for mn in minima:
            for _ in range(saddle_starts):
                kick = rng.uniform(0.0, 2.0 * amplitude, n)
                res = gentlest_ascent(d, mn.u + kick, tol)
                flows += 1
                if res.converged:
                    found.append(res)
                else:
                    discarded += 1
    reps, counts = _cluster(found, cluster_dist)
    clusters = [SolveReport(p.lam, r.u, d.report(r.u), f"oracle-{r.kind}", r.steps, True,
                            time.perf_counter() - t0, dict(kind=r.kind)) for r in reps]
    order = np.argsort([c.energy for c in clusters], kind="stable")
    return OracleResult([clusters[i] for i in order], flows, discarded, [counts[i] for i in order])
