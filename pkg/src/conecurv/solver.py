"""Solvers for ``Delta_g u + kappa - (K + lambda) e^{2u} = 0``.

* ``solve_convex``: damped Newton on the strictly convex energy (lambda <= 0).
* ``monotone_iteration``: ordered sub/super-solution iteration
  ``phi_j = (S + cM)^-1 M G(phi_{j-1})``.
* ``find_minimizer``: bracketed minimal solution, certified strict local minimum.
* ``mountain_pass``: second (saddle type) solution by path minimax.
* ``sweep_lambda``: natural continuation of both branches and fold estimate.
* ``nonexistence_probe``: Newton from many starts beyond the fold.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import shifted_factor
from .energy import (
    EigenSolverError,
    EnergyReport,
    ProblemData,
    energy,
    energy_report,
    exp2u,
    gradient,
    linearized_operator,
    lowest_eigenpair,
    residual_norm,
    residual_vector,
    solution_identity_check,
    symmetric_lu,
)

log = logging.getLogger(__name__)


@dataclass
class Tolerances:
    newton_tol: float = 1e-10
    mono_tol: float = 1e-9
    identity_rel: float = 1e-6
    lin_tol: float = 1e-10
    eig_tol: float = 1e-6
    distinct_tol: float = 1e-3
    drop_margin: float = 1.0
    quad_tol: float = 1e-2
    gb_tol: float = 1e-1

    def identity_tol(self, chi: float) -> float:
        return self.identity_rel * abs(2.0 * math.pi * chi)


class SolverError(RuntimeError):
    pass


class OrderingViolation(SolverError):
    def __init__(self, message: str, vertex: int, iteration: int):
        super().__init__(message)
        self.vertex = vertex
        self.iteration = iteration


class BracketError(SolverError):
    pass


class MountainPassError(SolverError):
    pass


@dataclass
class SolveReport:
    lam: float
    u: np.ndarray
    energy_report: EnergyReport
    method: str
    iterations: int
    converged: bool
    wall_time: float
    info: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return self.energy_report.value

    @property
    def eig_min(self) -> float:
        return self.energy_report.eig_min

    @property
    def residual(self) -> float:
        return self.energy_report.residual_norm


def _finish(p: ProblemData, u: np.ndarray, method: str, iterations: int, ok: bool, t0: float,
            tol: Tolerances, with_eig: bool = True, **info) -> SolveReport:
    rep = energy_report(p, u, with_eig=with_eig and np.all(np.isfinite(u)))
    converged = bool(ok and rep.residual_norm <= tol.newton_tol
                     and rep.identity_gap <= tol.identity_tol(p.chi))
    return SolveReport(p.lam, u, rep, method, iterations, converged, time.perf_counter() - t0, dict(info))


@dataclass
class NewtonResult:
    u: np.ndarray
    converged: bool
    iterations: int
    status: str
    residual: float


def newton(p: ProblemData, u0: np.ndarray, *, tol: float = 1e-10, max_iter: int = 100,
           merit: str = "energy", max_step: float = 5.0) -> NewtonResult:
    """Damped Newton for the discrete equation.

    ``merit="energy"`` requires a positive definite Jacobian at every iterate
    (minimization; fails with status ``"indefinite"`` otherwise) and backtracks
    on the energy.  ``merit="residual"`` backtracks on the squared residual and
    accepts any Jacobian, so it can converge to saddle points.
    """
    u = np.array(u0, dtype=float)
    r = residual_vector(p, u)
    rn = float(np.sqrt(np.sum(r * r / p.m)))
    for it in range(max_iter):
        if not np.isfinite(rn):
            return NewtonResult(u, False, it, "nonfinite", rn)
        if rn <= tol:
            return NewtonResult(u, True, it, "converged", rn)
        J = linearized_operator(p, u)
        try:
            lu, neg = symmetric_lu(J)
        except RuntimeError:
            return NewtonResult(u, False, it, "singular", rn)
        if merit == "energy" and neg != 0:
            return NewtonResult(u, False, it, "indefinite", rn)
        du = -lu.solve(r)
        if not np.all(np.isfinite(du)):
            return NewtonResult(u, False, it, "singular", rn)
        big = float(np.max(np.abs(du)))
        if big > max_step:
            du *= max_step / big
        alpha = 1.0
        if merit == "energy":
            E0 = energy(p, u)
            slope = 2.0 * float(r @ du)
        accepted = False
        while alpha > 1e-12:
            trial = u + alpha * du
            if np.any(np.abs(trial) > 50.0):
                alpha *= 0.5
                continue
            rt = residual_vector(p, trial)
            rnt = float(np.sqrt(np.sum(rt * rt / p.m)))
            if merit == "energy":
                Et = energy(p, trial)
                # near convergence energy differences sink below round-off; fall back to the residual
                if Et <= E0 + 1e-4 * alpha * slope or (abs(slope) < 1e-13 * (1.0 + abs(E0)) and rnt < rn):
                    accepted = True
            elif rnt <= (1.0 - 1e-4 * alpha) * rn:
                accepted = True
            if accepted:
                break
            alpha *= 0.5
        if not accepted:
            return NewtonResult(u, False, it, "line-search", rn)
        u, r, rn = trial, rt, rnt
    return NewtonResult(u, rn <= tol, max_iter, "converged" if rn <= tol else "max-iterations", rn)


def solve_convex(p: ProblemData, u0: np.ndarray | None = None, tol: Tolerances | None = None,
                 max_iter: int = 200) -> SolveReport:
    """Unique solution for ``lambda <= 0`` by Newton with energy line search."""
    tol = tol or Tolerances()
    if p.lam > 0:
        raise ValueError("solve_convex requires lambda <= 0")
    t0 = time.perf_counter()
    u0 = np.zeros(p.geom.n_vertices) if u0 is None else u0
    res = newton(p, u0, tol=tol.newton_tol, max_iter=max_iter, merit="energy")
    if not res.converged:
        log.warning("convex Newton stopped at lambda=%g: %s (residual %.3e)", p.lam, res.status, res.residual)
    return _finish(p, res.u, "convex_newton", res.iterations, res.converged, t0, tol, status=res.status)


# ----------------------------------------------------------------------------
# upper / lower solutions


@dataclass
class Bracket:
    lower: np.ndarray
    upper: np.ndarray

    def check(self, p: ProblemData, strict: bool = True) -> None:
        if np.any(self.lower > self.upper):
            i = int(np.argmax(self.lower - self.upper))
            raise BracketError(f"lower > upper at vertex {i}")
        free = ~p.geom.cone_mask
        rl = residual_vector(p, self.lower)[free]
        ru = residual_vector(p, self.upper)[free]
        if (np.any(rl > 0) or np.any(ru < 0)) if not strict else (np.any(rl >= 0) or np.any(ru <= 0)):
            raise BracketError("lower/upper residual signs are wrong")


def solve_singular(p: ProblemData, rhs_load: np.ndarray) -> np.ndarray:
    """Zero ``M``-mean solution of ``S eta = b`` for a load ``b`` with zero sum."""
    n = p.geom.n_vertices
    A = sp.bmat([[p.S, p.m[:, None]], [p.m[None, :], None]], format="csc")
    sol = splu(A).solve(np.concatenate([rhs_load, [0.0]]))
    return sol[:n]


def build_lower_solution(p: ProblemData, upper: np.ndarray | None = None, margin: float = 1e-3,
                         s_max: float = 2.0**20) -> np.ndarray:
    """``phi = eta - s`` with ``Delta eta = -kappa + mean(kappa)``.

    ``s`` is doubled until the residual of ``phi`` is at most
    ``-margin * |mean kappa|`` (per unit mass) everywhere and, when given,
    ``phi < upper``.
    """
    if not p.chi < 0:
        raise BracketError("a lower solution of this form needs chi < 0")
    kbar = float(p.kappa @ p.m) / float(p.m.sum())
    eta = solve_singular(p, p.m * (-p.kappa + kbar))
    s = 1.0
    while s <= s_max:
        phi = eta - s
        ok = np.all(residual_vector(p, phi) / p.m <= -margin * abs(kbar))
        if ok and (upper is None or np.all(phi < upper)):
            return phi
        s *= 2.0
    raise BracketError(f"no lower solution up to s={s_max:g}; mean curvature {kbar:.3e} must be negative")


def shift_constant(K_lambda: np.ndarray, top: float) -> float:
    """Shift making ``G(t) = c t - kappa + K e^{2t}`` increasing for ``t <= top``."""
    return 2.0 * float(np.max(np.abs(K_lambda))) * math.exp(2.0 * top) + 1.0


def monotone_iteration(p: ProblemData, b: Bracket, tol: Tolerances | None = None, max_iter: int = 5000,
                       order_tol: float = 1e-12, c: float | None = None, check: bool = True) -> SolveReport:
    """Iterate ``phi_j = L^-1 G(phi_{j-1})`` and ``psi_j = L^-1 G(psi_{j-1})``.

    The chain ``phi_{j-1} <= phi_j <= psi_j <= psi_{j-1}`` is verified at every
    step (up to ``order_tol`` relative round-off).  Returns the limit of the
    lower sequence, the minimal solution in the bracket.
    """
    tol = tol or Tolerances()
    t0 = time.perf_counter()
    if check:
        b.check(p, strict=False)
    Kl, kappa = p.K_lambda, p.kappa
    c = shift_constant(Kl, float(np.max(b.upper))) if c is None else c
    solver = shifted_factor(p.S, p.m, c)

    def G(t):
        e, _ = exp2u(t)
        return c * t - kappa + Kl * e

    phi, psi = np.array(b.lower, float), np.array(b.upper, float)
    checks = 0
    step = err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        phi_new = solver.solve(G(phi))
        psi_new = solver.solve(G(psi))
        slack = order_tol * (1.0 + np.maximum(np.abs(phi_new), np.abs(psi_new)))
        for name, lo, hi in (("phi_{j-1} <= phi_j", phi, phi_new),
                             ("phi_j <= psi_j", phi_new, psi_new),
                             ("psi_j <= psi_{j-1}", psi_new, psi)):
            bad = np.flatnonzero(lo - hi > slack)
            checks += 1
            if bad.size:
                raise OrderingViolation(f"ordering {name} fails at vertex {bad[0]} in iteration {it}",
                                        int(bad[0]), it)
        prev, step = step, float(np.max(np.abs(phi_new - phi)))
        phi, psi = phi_new, psi_new
        # a-posteriori distance to the limit for a linearly contracting sequence
        q = min(step / prev, 0.999) if np.isfinite(prev) and prev > 0 else 0.999
        err = step * q / (1.0 - q)
        if err <= tol.mono_tol and residual_norm(p, phi) <= 10 * tol.mono_tol:
            break
    ok = err <= tol.mono_tol
    rep = _finish(p, phi, "monotone", it, True, t0, tol, shift=c, ordering_checks=checks,
                  ordering_violations=0, last_step=step, error_estimate=err, mono_converged=ok)
    rep.converged = ok and rep.residual <= 10 * tol.mono_tol
    rep.info["upper_limit"] = psi
    return rep


# ----------------------------------------------------------------------------
# minimal branch


def tangent(p: ProblemData, u: np.ndarray) -> np.ndarray:
    """``du/dlambda`` along a branch: ``(S - 2 M K e^{2u}) u' = M e^{2u}``."""
    e, _ = exp2u(u)
    lu, _ = symmetric_lu(linearized_operator(p, u))
    return lu.solve(p.m * e)


def continue_minimal(p: ProblemData, lam_target: float, u0: np.ndarray | None = None, lam0: float = 0.0,
                     step: float = 0.05, min_step: float = 1e-6, tol: Tolerances | None = None) -> np.ndarray:
    """Follow the minimal branch from ``lam0`` (<= 0) to ``lam_target`` by
    natural continuation with a tangent predictor and step halving."""
    tol = tol or Tolerances()
    if u0 is None:
        u0 = solve_convex(p.with_lambda(min(lam0, 0.0)), tol=tol).u
        lam0 = min(lam0, 0.0)
    lam, u = lam0, u0
    h = step
    while lam < lam_target:
        h = min(h, lam_target - lam)
        q = p.with_lambda(lam + h)
        guess = u + h * tangent(p.with_lambda(lam), u)
        res = newton(q, guess, tol=tol.newton_tol, merit="energy")
        if not res.converged:
            res = newton(q, u, tol=tol.newton_tol, merit="energy")
        if res.converged:
            lam, u = lam + h, res.u
            h *= 1.5
        else:
            h *= 0.5
            if h < min_step:
                raise SolverError(f"minimal branch lost at lambda={lam:.6g}; target {lam_target:g} beyond the fold?")
    return u


def find_minimizer(p: ProblemData, upper: SolveReport | np.ndarray | None = None,
                   predictor: np.ndarray | None = None, tol: Tolerances | None = None,
                   mono_max_iter: int = 5000) -> SolveReport:
    """Minimal solution at ``0 < lambda`` certified as a strict local minimum.

    With ``upper`` (a solution at some ``lambda_1 > lambda``) the minimal
    solution between ``eta - s`` and ``upper`` is computed by monotone
    iteration and polished by Newton.  Without it Newton runs from
    ``predictor`` (or from a continuation of the minimal branch).
    """
    tol = tol or Tolerances()
    t0 = time.perf_counter()
    if p.lam <= 0:
        return solve_convex(p, predictor, tol)
    info: dict = {}
    if upper is not None:
        psi = upper.u if isinstance(upper, SolveReport) else np.asarray(upper, float)
        if np.any(residual_vector(p, psi)[~p.geom.cone_mask] <= 0):
            raise BracketError("supplied upper field is not a strict upper solution at this lambda")
        phi = build_lower_solution(p, upper=psi)
        mono = monotone_iteration(p, Bracket(phi, psi), tol, max_iter=mono_max_iter)
        info.update(monotone_iterations=mono.iterations, monotone_residual=mono.residual,
                    monotone_converged=mono.info["mono_converged"])
        start = mono.u
        bracket = (phi, psi)
    else:
        start = predictor if predictor is not None else continue_minimal(p, p.lam, tol=tol)
        bracket = None
    res = newton(p, start, tol=tol.newton_tol, merit="energy")
    rep = _finish(p, res.u, "monotone" if bracket else "continuation", res.iterations, res.converged, t0, tol,
                  status=res.status, **info)
    if bracket is not None:
        free = ~p.geom.cone_mask
        rep.info["strictly_inside"] = bool(np.all(bracket[0][free] < res.u[free]) and np.all(res.u[free] < bracket[1][free]))
    if rep.converged and not rep.eig_min > 0:
        log.warning("minimal solution at lambda=%g has eig_min %.3e <= 0", p.lam, rep.eig_min)
        rep.converged = False
    return rep


# ----------------------------------------------------------------------------
# mountain pass


def _h1_norm(p: ProblemData, x: np.ndarray) -> float:
    return float(np.sqrt(x @ (p.S @ x) + x @ (p.m * x)))


def bump(p: ProblemData) -> np.ndarray:
    """Nonnegative bump supported where ``K_lambda > 0``, peak value 1."""
    w = np.maximum(p.K_lambda, 0.0)
    if not np.any(w > 0):
        raise MountainPassError("{K_lambda > 0} is empty: no mountain pass geometry (lambda <= 0?)")
    return (w / w.max()) ** 2


def _ray_profile(p: ProblemData, base: np.ndarray, v: np.ndarray, E0: float, drop: float,
                 t_first: float = 1e-3, growth: float = 1.25, t_max: float = 200.0):
    """Sample ``t -> E(base + t v)`` geometrically until it falls below
    ``E0 - drop`` (the far endpoint).  Returns ``(ts, Es)`` or ``None``."""
    ts, Es = [0.0], [E0]
    t = t_first
    while t <= t_max:
        x = base + t * v
        if np.max(x) > 45.0:
            return None
        E = energy(p, x)
        ts.append(t)
        Es.append(E)
        if E <= E0 - drop:
            return np.array(ts), np.array(Es)
        t *= growth
    return None


def _ray_max(p: ProblemData, base: np.ndarray, v: np.ndarray, E0: float, drop: float):
    from scipy.optimize import minimize_scalar

    prof = _ray_profile(p, base, v, E0, drop)
    if prof is None:
        return None
    ts, Es = prof
    k = int(np.argmax(Es))
    if k == 0:
        return None
    a, b = ts[k - 1], ts[min(k + 1, len(ts) - 1)]
    r = minimize_scalar(lambda s: -energy(p, base + s * v), bounds=(a, b), method="bounded",
                        options=dict(xatol=1e-10 * max(1.0, b)))
    return float(r.x), float(-r.fun), float(ts[-1])


def mountain_pass(p: ProblemData, u_min: SolveReport, tol: Tolerances | None = None, n_path: int = 17,
                  max_iter: int = 500, direction: np.ndarray | None = None, switch: float = 1e-2) -> SolveReport:
    """Second solution of mountain-pass type.

    Paths are rays from ``u_min`` through a direction ``v``, anchored at a far
    endpoint ``u_min + T v`` with ``E <= E(u_min) - drop_margin``; each is
    discretized on ``n_path`` nodes whose highest node is refined by a 1-D
    maximization.  The path maximum is lowered by Sobolev steepest descent of
    the highest point (which moves the direction, re-anchoring the endpoint)
    until the gradient there is small, then Newton polishes the saddle.
    """
    tol = tol or Tolerances()
    t0 = time.perf_counter()
    if p.lam <= 0:
        raise MountainPassError("mountain pass needs lambda > 0")
    umin = u_min.u
    E0 = energy(p, umin)
    drop = tol.drop_margin
    P = shifted_factor(p.S, p.m, 1.0)

    w = bump(p) if direction is None else np.asarray(direction, float)
    # far endpoint: double t until the energy has dropped by drop_margin
    t_end = 1.0
    while energy(p, umin + t_end * w) > E0 - drop:
        t_end *= 2.0
        if np.max(umin + t_end * w) > 45.0:
            raise MountainPassError("could not find a far endpoint below E(u_min)")
    v = w / _h1_norm(p, w)

    def path_max(v):
        found = _ray_max(p, umin, v, E0, drop)
        if found is None:
            return None
        t, E, T = found
        nodes = np.linspace(0.0, T, n_path)
        E_nodes = [energy(p, umin + s * v) for s in nodes]
        return t, E, max(E_nodes)

    state = path_max(v)
    if state is None:
        raise MountainPassError("initial path has no interior maximum")
    t, E, _ = state
    s = 1.0
    history = []
    for it in range(1, max_iter + 1):
        x = umin + t * v
        g = gradient(p, x)
        d = P.solve(g / p.m)
        gn = float(np.sqrt(max(g @ d, 0.0)))
        history.append((E, gn))
        if gn < switch * (1.0 + abs(E)):
            res = newton(p, x, tol=tol.newton_tol, merit="residual", max_iter=60)
            dist = float(np.sqrt((res.u - umin) @ (p.m * (res.u - umin))))
            if res.converged and dist >= tol.distinct_tol and energy(p, res.u) > E0:
                rep = _finish(p, res.u, "mountain_pass", it, True, t0, tol, minimax_value=E,
                              newton_iterations=res.iterations, distance=dist, direction=v)
                rep.info["saddle_like"] = bool(rep.eig_min <= tol.eig_tol)
                return rep
            if res.converged and dist < tol.distinct_tol:
                raise MountainPassError("path collapsed onto u_min: suspected lambda >= lambda*")
            switch *= 0.1
        moved = False
        while s > 1e-12:
            vn = t * v - s * d
            vn /= _h1_norm(p, vn)
            cand = path_max(vn)
            if cand is not None and cand[1] <= E - 1e-4 * s * gn * gn:
                v, (t, E, _) = vn, cand
                s = min(2.0 * s, 1e3)
                moved = True
                break
            s *= 0.5
        if not moved:
            break
    raise MountainPassError(f"path minimax stalled after {it} iterations (max E {E:.6g})")


# ----------------------------------------------------------------------------
# continuation in lambda


@dataclass
class SweepConfig:
    start: float = 0.0
    max: float = 2.0
    step: float = 0.05
    fold_tol: float = 1e-4
    mono_max_iter: int = 400
    branches: bool = True


@dataclass
class DiagramRow:
    lam: float
    branch: int
    energy: float
    u_mean: float
    eig_min: float
    converged: bool


@dataclass
class BifurcationDiagram:
    rows: list[DiagramRow] = field(default_factory=list)
    lambda_star: float = float("nan")
    bracket: tuple[float, float] = (float("nan"), float("nan"))
    solutions: dict = field(default_factory=dict, repr=False)

    def sort(self) -> None:
        self.rows.sort(key=lambda r: (r.branch, r.lam))

    def branch(self, b: int) -> list[DiagramRow]:
        return [r for r in self.rows if r.branch == b]

    def to_csv(self) -> str:
        out = ["lambda,branch,energy,u_mean,eig_min,converged"]
        for r in self.rows:
            out.append(f"{r.lam:.17g},{r.branch},{r.energy:.17g},{r.u_mean:.17g},{r.eig_min:.17g},{int(r.converged)}")
        return "\n".join(out) + "\n"


def _row(p: ProblemData, rep: SolveReport, branch: int) -> DiagramRow:
    mean = float(rep.u @ p.m / p.m.sum())
    return DiagramRow(rep.lam, branch, rep.energy, mean, rep.eig_min, rep.converged)


def sweep_lambda(p0: ProblemData, schedule: SweepConfig | None = None, tol: Tolerances | None = None) -> BifurcationDiagram:
    """Trace the minimal branch upward in lambda until Newton fails, halving
    the step down to ``fold_tol`` (a bisection of the fold window), then
    certify each accepted point (monotone bracket + Newton) and compute the
    mountain-pass branch there."""
    sc = schedule or SweepConfig()
    tol = tol or Tolerances()
    p0.check_hypotheses()
    diagram = BifurcationDiagram()

    lam = sc.start
    first = solve_convex(p0.with_lambda(min(lam, 0.0)), tol=tol)
    if not first.converged:
        raise SolverError("could not solve at the sweep start")
    u = first.u if lam <= 0 else continue_minimal(p0, lam, first.u, min(lam, 0.0), tol=tol)
    accepted: list[tuple[float, np.ndarray]] = [(lam, u)]
    h = sc.step
    failed_at = float("inf")
    # grow until the first failure, then bisect the window [lam, failed_at]
    while lam < sc.max and failed_at - lam > sc.fold_tol:
        h = min(h, sc.max - lam)
        if math.isfinite(failed_at):
            h = 0.5 * (failed_at - lam)
        target = lam + h
        q = p0.with_lambda(target)
        guess = u + h * tangent(p0.with_lambda(lam), u)
        res = newton(q, guess, tol=tol.newton_tol, merit="energy")
        ok = res.converged
        if ok:
            try:
                ok = lowest_eigenpair(q, res.u)[0] > 0
            except EigenSolverError:
                ok = False
        if ok:
            lam, u = target, res.u
            accepted.append((lam, u))
        else:
            failed_at = target
    diagram.lambda_star = lam
    diagram.bracket = (lam, failed_at)
    if not 0 < diagram.lambda_star < -float(p0.K.min()):
        log.warning("fold estimate %.6g outside (0, -min K)", diagram.lambda_star)

    # certify the minimal branch and add the mountain-pass branch
    direction = None
    for k, (lam_k, u_k) in enumerate(accepted):
        q = p0.with_lambda(lam_k)
        if lam_k <= 0:
            rep0 = solve_convex(q, u_k, tol)
        elif k + 1 < len(accepted):
            rep0 = find_minimizer(q, upper=accepted[k + 1][1], tol=tol, mono_max_iter=sc.mono_max_iter)
        else:
            rep0 = find_minimizer(q, predictor=u_k, tol=tol)
        diagram.rows.append(_row(q, rep0, 0))
        diagram.solutions[(0, lam_k)] = rep0
        if lam_k <= 0 or not sc.branches:
            continue
        try:
            rep1 = mountain_pass(q, rep0, tol, direction=direction)
            direction = rep1.u - rep0.u
            rep1.converged = rep1.converged and rep1.energy > rep0.energy
        except (MountainPassError, EigenSolverError) as exc:
            log.info("no mountain-pass solution at lambda=%g: %s", lam_k, exc)
            continue
        diagram.rows.append(_row(q, rep1, 1))
        diagram.solutions[(1, lam_k)] = rep1
    diagram.sort()
    return diagram


# ----------------------------------------------------------------------------
# beyond the fold


@dataclass
class ProbeReport:
    lam: float
    starts: int
    converged: int
    statuses: list[str]
    residuals: list[float]
    k_lambda_nonnegative: bool
    identity_obstruction: str
    seed: int | None
    solutions: list = field(default_factory=list, repr=False)

    @property
    def underestimate(self) -> bool:
        return self.converged > 0

    def to_dict(self) -> dict:
        return dict(lam=self.lam, starts=self.starts, converged=self.converged, statuses=self.statuses,
                    residuals=self.residuals, k_lambda_nonnegative=self.k_lambda_nonnegative,
                    identity_obstruction=self.identity_obstruction, seed=self.seed,
                    lambda_star_underestimate=self.underestimate)


def nonexistence_probe(p: ProblemData, starts: int = 20, seed: int = 0, extra: Sequence[np.ndarray] = (),
                       amplitude: float = 2.0, tol: Tolerances | None = None, max_iter: int = 100) -> ProbeReport:
    """Newton (residual line search, so saddles count too) from ``starts``
    seeded random fields in ``[-amplitude, amplitude]`` plus any ``extra``
    starts; a solution would need ``int K_lambda e^{2u} dv_g = 2 pi chi < 0``."""
    tol = tol or Tolerances()
    rng = np.random.default_rng(seed)
    inits = [rng.uniform(-amplitude, amplitude, p.geom.n_vertices) for _ in range(starts)] + [np.asarray(x, float) for x in extra]
    statuses, residuals, sols = [], [], []
    n_conv = 0
    for u0 in inits:
        res = newton(p, u0, tol=tol.newton_tol, merit="residual", max_iter=max_iter)
        statuses.append(res.status)
        residuals.append(float(res.residual))
        if res.converged:
            n_conv += 1
            sols.append(res.u)
    nonneg = bool(np.all(p.K_lambda >= 0))
    if nonneg:
        msg = (f"K_lambda >= 0 everywhere, so int K_lambda e^(2u) dv_g >= 0 > 2 pi chi = {2 * math.pi * p.chi:.6g}: "
               "no solution can exist")
    else:
        frac = float(p.m[p.K_lambda > 0].sum() / p.m.sum())
        msg = f"K_lambda changes sign (positive on {frac:.3%} of the volume); identity gives no direct obstruction"
    log.info("probe at lambda=%g: %d/%d converged", p.lam, n_conv, len(inits))
    return ProbeReport(p.lam, len(inits), n_conv, statuses, residuals, nonneg, msg, seed, sols)
