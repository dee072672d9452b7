"""Discrete operators: cotangent stiffness, conically weighted lumped mass,
the shifted solve ``(S + c M)^-1 M`` and discrete maximum principle checks."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import AREA_FLOOR, ConicalGeometry, TriMesh


class AssemblyError(RuntimeError):
    pass


def cotangent_weights(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-face half-cotangents of the angle opposite each local edge.

    Returns ``(i, j, w)`` for the edges ``(1,2), (2,0), (0,1)`` of every face.
    """
    V, F = mesh.vertices, mesh.faces
    i0, i1, i2 = F[:, 0], F[:, 1], F[:, 2]
    e0 = V[i2] - V[i1]
    e1 = V[i0] - V[i2]
    e2 = V[i1] - V[i0]
    dbl = np.linalg.norm(np.cross(e2, -e1), axis=1)
    bad = np.flatnonzero(dbl <= 2 * AREA_FLOOR)
    if bad.size:
        raise AssemblyError(f"degenerate triangle: face {bad[0]} {F[bad[0]].tolist()}")
    # cot of the angle at vertex k = (a . b) / |a x b| with a, b the edges leaving k
    cot0 = np.einsum("ij,ij->i", -e2, e1) / dbl
    cot1 = np.einsum("ij,ij->i", -e0, e2) / dbl
    cot2 = np.einsum("ij,ij->i", -e1, e0) / dbl
    I = np.concatenate([i1, i2, i0])
    J = np.concatenate([i2, i0, i1])
    W = 0.5 * np.concatenate([cot0, cot1, cot2])
    return I, J, W


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Cotangent matrix of ``int grad u . grad v dv_g0`` on the flat mesh."""
    I, J, W = cotangent_weights(mesh)
    n = mesh.n_vertices
    rows = np.concatenate([I, J, I, J])
    cols = np.concatenate([J, I, I, J])
    vals = np.concatenate([-W, -W, W, W])
    S = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    return S


def assemble_mass(geom: ConicalGeometry) -> np.ndarray:
    """Diagonal of the lumped mass ``M_rho`` (a 1-D array)."""
    m = np.asarray(geom.mass, dtype=float)
    bad = np.flatnonzero(~(m > 0))
    if bad.size:
        raise AssemblyError(f"nonpositive lumped mass at vertex {bad[0]}")
    return m


def weighted_mass(m: np.ndarray, w: np.ndarray) -> sp.dia_matrix:
    """``M_w = diag(m * w)``: the lumped mass reweighted by a nodal field."""
    return sp.diags(m * w)


class ShiftedSolver:
    """Sparse LU of ``S + c M`` for repeated solves with ``M``-weighted data."""

    def __init__(self, S: sp.spmatrix, m: np.ndarray, c: float):
        if not c > 0:
            raise ValueError("shift c must be positive")
        self.c = float(c)
        self.m = m
        A = (S + sp.diags(c * m)).tocsc()
        try:
            self._lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options=dict(SymmetricMode=True))
        except RuntimeError as exc:  # singular factor
            raise AssemblyError(f"factorization of S + {c} M failed: {exc}") from exc
        if np.any(self._lu.U.diagonal() <= 0):
            raise AssemblyError(f"S + {c} M is not positive definite")
        self._A = A
        self._lock = threading.Lock()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return ``u`` with ``(S + c M) u = M rhs``."""
        with self._lock:
            return self._lu.solve(self.m * np.asarray(rhs, dtype=float))

    def residual(self, u: np.ndarray, rhs: np.ndarray) -> float:
        b = self.m * rhs
        r = self._A @ u - b
        return float(np.linalg.norm(r) / max(np.linalg.norm(b), np.finfo(float).tiny))


_cache: dict[tuple[int, int, float], tuple[object, object, ShiftedSolver]] = {}
_cache_lock = threading.Lock()
_CACHE_SIZE = 16


def shifted_factor(S: sp.spmatrix, m: np.ndarray, c: float) -> ShiftedSolver:
    """Factorization of ``S + c M``, cached per ``(S, M, c)``."""
    key = (id(S), id(m), float(c))
    with _cache_lock:
        hit = _cache.get(key)
        if hit is not None and hit[0] is S and hit[1] is m:
            return hit[2]
    solver = ShiftedSolver(S, m, c)
    with _cache_lock:
        if len(_cache) >= _CACHE_SIZE:
            _cache.pop(next(iter(_cache)))
        _cache[key] = (S, m, solver)
    return solver


def shifted_solve(S: sp.spmatrix, m: np.ndarray, c: float, rhs: np.ndarray) -> np.ndarray:
    """Discrete ``L^-1`` for ``L = Delta_g + c``: solves ``(S + c M) u = M rhs``."""
    return shifted_factor(S, m, c).solve(rhs)


@dataclass
class DMPReport:
    trials: int
    min_entry: float
    min_entry_positive_rhs: float
    weak_violations: int
    strong_violations: int
    positive_offdiagonals: int
    max_offdiagonal: float

    @property
    def ok(self) -> bool:
        return self.weak_violations == 0 and self.strong_violations == 0


def dmp_check(S: sp.spmatrix, m: np.ndarray, c: float, trials: int = 100,
              rng: np.random.Generator | None = None, weak_tol: float = 1e-12) -> DMPReport:
    """Solve with random nonnegative data and check the discrete maximum principle.

    Half the trials use sparse data (a few random vertices) to exercise the
    strong form away from the support.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    solver = shifted_factor(S, m, c)
    n = S.shape[0]
    off = sp.triu(S, k=1).tocoo()
    n_pos = int(np.sum(off.data > 0))
    max_off = float(off.data.max()) if off.nnz else 0.0
    min_all, min_pos = np.inf, np.inf
    weak = strong = 0
    for t in range(trials):
        if t % 2 == 0:
            rhs = rng.random(n)
        else:
            rhs = np.zeros(n)
            idx = rng.choice(n, size=min(3, n), replace=False)
            rhs[idx] = rng.random(len(idx)) + 0.1
        u = solver.solve(rhs)
        lo = float(u.min())
        min_all = min(min_all, lo)
        if lo < -weak_tol:
            weak += 1
        if np.any(rhs > 0):
            min_pos = min(min_pos, lo)
            if not lo > 0:
                strong += 1
    return DMPReport(trials, min_all, min_pos, weak, strong, n_pos, max_off)


def dump_coo(A: sp.spmatrix) -> str:
    """Coordinate text dump: one ``row col value`` triple per line."""
    C = sp.coo_matrix(A)
    return "".join(f"{i} {j} {v!r}\n" for i, j, v in zip(C.row.tolist(), C.col.tolist(), C.data.tolist()))
