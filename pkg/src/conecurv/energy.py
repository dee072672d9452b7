"""The functional ``E(u) = int |grad u|^2 + 2 kappa u - K_lambda e^{2u} dv_g``
and its derivatives in discrete form.

With ``S`` the stiffness matrix and ``m`` the lumped mass diagonal::

    E(u)  = u.S.u + 2 (m kappa).u - sum_i m_i K_i e^{2 u_i}
    dE(u) = 2 (S u + m kappa - m K e^{2u})
    d2E(u) = 2 (S - 2 diag(m K e^{2u}))

The bracketed vector ``S u + m kappa - m K e^{2u}`` is the residual of the
curvature equation ``Delta_g u + kappa - K_lambda e^{2u} = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .assembly import assemble_mass, assemble_stiffness
from .geometry import ConicalGeometry

EXP_CLAMP = 50.0


class HypothesisError(ValueError):
    """Input violates a standing assumption of the existence theory."""


class EigenSolverError(RuntimeError):
    pass


def exp2u(u: np.ndarray) -> tuple[np.ndarray, bool]:
    """``e^{2u}`` with ``u`` clamped to ``[-50, 50]``; the flag reports clamping."""
    clamped = bool(np.any(np.abs(u) > EXP_CLAMP))
    return np.exp(2.0 * np.clip(u, -EXP_CLAMP, EXP_CLAMP)), clamped


@dataclass(eq=False)
class ProblemData:
    geom: ConicalGeometry
    K: np.ndarray
    lam: float
    S: sp.csr_matrix = field(default=None, repr=False)
    m: np.ndarray = field(default=None, repr=False)
    kappa_override: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.lam = float(self.lam)
        if self.S is None:
            self.S = assemble_stiffness(self.geom.mesh)
        if self.m is None:
            self.m = assemble_mass(self.geom)
        if self.K.shape != (self.geom.n_vertices,) or not np.all(np.isfinite(self.K)):
            raise ValueError("K must be a finite per-vertex field")
        if self.kappa_override is not None:
            self.kappa_override = np.asarray(self.kappa_override, dtype=float)

    @property
    def K_lambda(self) -> np.ndarray:
        return self.K + self.lam

    @property
    def kappa(self) -> np.ndarray:
        return self.geom.kappa if self.kappa_override is None else self.kappa_override

    @property
    def chi(self) -> float:
        return self.geom.euler_characteristic

    def with_lambda(self, lam: float) -> "ProblemData":
        return ProblemData(self.geom, self.K, lam, self.S, self.m, self.kappa_override)

    def check_hypotheses(self, tol: float = 1e-12) -> None:
        if not self.chi < 0:
            raise HypothesisError(f"chi(Sigma, beta) = {self.chi:g} must be negative")
        if abs(self.K.max()) > tol:
            raise HypothesisError(f"max K = {self.K.max():.3e}, but max K = 0 is required")
        if np.all(np.abs(self.K) <= tol):
            raise HypothesisError("K vanishes identically; K must not be identically zero")


def residual_vector(p: ProblemData, u: np.ndarray) -> np.ndarray:
    e, _ = exp2u(u)
    return p.S @ u + p.m * (p.kappa - p.K_lambda * e)


def energy(p: ProblemData, u: np.ndarray) -> float:
    e, _ = exp2u(u)
    return float(u @ (p.S @ u) + 2.0 * (p.m * p.kappa) @ u - (p.m * p.K_lambda) @ e)


def gradient(p: ProblemData, u: np.ndarray, riesz: bool = False) -> np.ndarray:
    """Raw coefficient gradient ``dE(u)[phi_i]``, or with ``riesz=True`` its
    representative in the ``M_rho`` inner product (``M^-1`` times it)."""
    g = 2.0 * residual_vector(p, u)
    return g / p.m if riesz else g


def hessian_matrix(p: ProblemData, u: np.ndarray) -> sp.csr_matrix:
    """``h -> 2 (S - 2 M_{K e^{2u}}) h`` as a sparse matrix."""
    e, _ = exp2u(u)
    return (2.0 * (p.S - sp.diags(2.0 * p.m * p.K_lambda * e))).tocsr()


def hessian_form(p: ProblemData, u: np.ndarray, h: np.ndarray, k: np.ndarray | None = None) -> float:
    k = h if k is None else k
    return float(h @ (hessian_matrix(p, u) @ k))


def residual_norm(p: ProblemData, u: np.ndarray) -> float:
    """``M^-1`` weighted norm of the equation residual."""
    r = residual_vector(p, u)
    return float(np.sqrt(np.sum(r * r / p.m)))


def solution_identity_check(p: ProblemData, u: np.ndarray) -> float:
    """``|int K_lambda e^{2u} dv_g - 2 pi chi|``; zero for any solution."""
    e, _ = exp2u(u)
    return abs(float((p.m * p.K_lambda) @ e) - 2.0 * np.pi * p.chi)


def linearized_operator(p: ProblemData, u: np.ndarray) -> sp.csr_matrix:
    """``S - 2 M_{K e^{2u}}``: half the Hessian, the Jacobian of the residual."""
    e, _ = exp2u(u)
    return (p.S - sp.diags(2.0 * p.m * p.K_lambda * e)).tocsr()


def symmetric_lu(A: sp.spmatrix):
    """LU without row pivoting on a symmetric ordering, so that the signs of
    ``U``'s diagonal give the inertia of ``A``.  Returns ``(lu, n_negative)``,
    with ``n_negative = None`` when SuperLU had to pivot anyway."""
    lu = splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options=dict(SymmetricMode=True))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return lu, None
    return lu, int(np.sum(lu.U.diagonal() < 0))


def lowest_eigenpair(p: ProblemData, u: np.ndarray, tol: float = 1e-10, maxiter: int = 5000) -> tuple[float, np.ndarray]:
    """Smallest ``mu`` with ``(S - 2 M_{K e^{2u}}) h = mu M h`` and ``h.M.h = 1``.

    Shift-and-invert Lanczos on the mass-symmetrized operator.  The first shift
    is the Gershgorin-type lower bound ``min(-2 K e^{2u}) - 1``; it is then
    moved up to just below the estimate (checked by inertia) and the solve is
    repeated, which sharpens convergence when the bound is loose.
    """
    A = linearized_operator(p, u)
    n = A.shape[0]
    e, _ = exp2u(u)
    dinv = 1.0 / np.sqrt(p.m)
    B = sp.diags(dinv) @ A @ sp.diags(dinv)
    B = ((B + B.T) * 0.5).tocsc()
    eye = sp.identity(n, format="csc")
    sigma = float(np.min(-2.0 * p.K_lambda * e)) - 1.0

    def solve_at(sig: float):
        lu = splu((B - sig * eye).tocsc())
        op = LinearOperator((n, n), matvec=lu.solve, dtype=float)
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            vals, vecs = eigsh(B, k=1, sigma=sig, which="LM", OPinv=op, tol=tol, maxiter=maxiter, v0=v0)
        except Exception as exc:  # ArpackNoConvergence and friends
            raise EigenSolverError(f"shift-invert eigensolve at sigma={sig:.4g} failed: {exc}") from exc
        return float(vals[0]), vecs[:, 0]

    if n <= 3:
        vals, vecs = np.linalg.eigh(B.toarray())
        mu, y = float(vals[0]), vecs[:, 0]
    else:
        mu, y = solve_at(sigma)
        gap = max(1e-3, 1e-2 * abs(mu))
        refined = mu - gap
        if refined > sigma + 1e-12:
            _, neg = symmetric_lu(B - refined * eye)
            if neg == 0:
                mu, y = solve_at(refined)
    h = y * dinv
    h /= np.sqrt(h @ (p.m * h))
    i = int(np.argmax(np.abs(h)))
    if h[i] < 0:
        h = -h
    return mu, h


@dataclass
class EnergyReport:
    value: float
    gradient_norm: float
    eig_min: float
    residual_norm: float
    identity_gap: float = float("nan")

    def to_dict(self) -> dict:
        return dict(value=self.value, gradient_norm=self.gradient_norm, eig_min=self.eig_min,
                    residual_norm=self.residual_norm, identity_gap=self.identity_gap)


def energy_report(p: ProblemData, u: np.ndarray, with_eig: bool = True) -> EnergyReport:
    g = gradient(p, u)
    mu = lowest_eigenpair(p, u)[0] if with_eig else float("nan")
    return EnergyReport(
        value=energy(p, u),
        gradient_norm=float(np.sqrt(np.sum(g * g / p.m))),
        eig_min=mu,
        residual_norm=residual_norm(p, u),
        identity_gap=solution_identity_check(p, u),
    )


@dataclass
class DerivativeCheck:
    gradient_rel: float
    hessian_rel: float


def finite_difference_check(p: ProblemData, u: np.ndarray, h: np.ndarray, eps: float = 1e-5) -> DerivativeCheck:
    """Central differences of ``E`` and ``dE`` along ``h`` against the analytic
    first and second variations."""
    dE = (energy(p, u + eps * h) - energy(p, u - eps * h)) / (2.0 * eps)
    g = gradient(p, u) @ h
    dg = (gradient(p, u + eps * h) - gradient(p, u - eps * h)) / (2.0 * eps)
    Hh = hessian_matrix(p, u) @ h
    return DerivativeCheck(
        gradient_rel=abs(dE - g) / max(abs(g), 1e-300),
        hessian_rel=float(np.linalg.norm(dg - Hh) / max(np.linalg.norm(Hh), 1e-300)),
    )
