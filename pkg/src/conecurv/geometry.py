"""Singular surface data: icosphere meshes, divisors, the conical density and
the background curvature fixture.

The background metric g0 is the round unit sphere.  A divisor places cone
points of order ``beta_i`` at mesh vertices and the conical metric is
``g = rho * g0`` with the chordal density

    rho(x) = prod_i (|x - p_i| / 2) ** (2 beta_i).

Since ``|x - p| / 2 = sin(theta / 2)`` and ``log sin(theta / 2)`` has constant
(positive) Laplacian 1/2 away from ``p``, the curvature of ``g`` is
``kappa = (1 + |beta| / 2) / rho``, which vanishes at every cone point when all
``beta_i < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_SUBDIVISIONS = 8
AREA_FLOOR = 1e-12


class GeometryError(ValueError):
    """Invalid mesh, divisor or geometry input."""


class SingularNodeError(GeometryError):
    """Density evaluated exactly at a cone point of negative order."""


class UnsupportedFixtureError(GeometryError):
    """The closed-form curvature fixture needs every cone order negative."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    subdivision_level: int = 0

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted unique undirected edges, shape (E, 2)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + len(self.faces)

    def validate(self, area_floor: float = AREA_FLOOR) -> None:
        """Raise GeometryError unless every TriMesh invariant holds."""
        norms = np.linalg.norm(self.vertices, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise GeometryError("vertices are not on the unit sphere")
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        # each directed edge appears once and its reverse once: closed and oriented
        keys = directed[:, 0].astype(np.int64) * self.n_vertices + directed[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise GeometryError("inconsistent orientation or non-manifold edge")
        rev = directed[:, 1].astype(np.int64) * self.n_vertices + directed[:, 0]
        if not np.array_equal(np.sort(keys), np.sort(rev)):
            raise GeometryError("mesh is not closed: boundary edge found")
        if self.euler_characteristic() != 2:
            raise GeometryError(f"V - E + F = {self.euler_characteristic()}, expected 2")
        a, b, c = (self.vertices[f[:, k]] for k in range(3))
        outward = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c)
        if np.any(outward <= 0):
            raise GeometryError("faces are not counter-clockwise seen from outside")
        small = np.flatnonzero(self.face_areas < area_floor)
        if small.size:
            raise GeometryError(f"face {small[0]} has area below {area_floor}")

    def to_text(self) -> str:
        """Indexed face-set export: ``v x y z`` lines then 0-based ``f i j k``."""
        lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        lines += [f"f {i} {j} {k}" for i, j, k in self.faces.tolist()]
        return "\n".join(lines) + "\n"


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    # rotate about the x axis so vertex 5 sits at the north pole
    t = math.atan2(1.0, phi)
    rot = np.array([[1, 0, 0], [0, math.cos(t), -math.sin(t)], [0, math.sin(t), math.cos(t)]])
    v = v @ rot.T
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[5] = (0.0, 0.0, 1.0)
    v[6] = (0.0, 0.0, -1.0)
    return v, f


def _refine(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    verts = list(map(tuple, vertices))
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        k = midpoint.get(key)
        if k is None:
            p = vertices[i] + vertices[j]
            p = p / np.linalg.norm(p)
            k = len(verts)
            verts.append(tuple(p))
            midpoint[key] = k
        return k

    new_faces = []
    for a, b, c in faces.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts, dtype=float), np.array(new_faces, dtype=np.int64)


def build_icosphere(subdivisions: int) -> TriMesh:
    """Icosahedron refined 1-to-4 ``subdivisions`` times, vertices on the unit
    sphere.  Vertex 5 is the north pole and vertex 6 the south pole."""
    if not isinstance(subdivisions, (int, np.integer)) or not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise GeometryError(f"subdivisions must be an integer in [0, {MAX_SUBDIVISIONS}]")
    v, f = _icosahedron()
    for _ in range(int(subdivisions)):
        v, f = _refine(v, f)
    mesh = TriMesh(v, f, int(subdivisions))
    mesh.validate()
    return mesh


@dataclass(frozen=True)
class Divisor:
    """Formal sum of cone points; ``entries`` holds ``(vertex_id, beta)``."""

    entries: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        entries = tuple((int(v), float(b)) for v, b in self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [v for v, _ in entries]
        if len(set(ids)) != len(ids):
            raise GeometryError("divisor vertex ids must be distinct")
        for v, b in entries:
            if not b > -1.0:
                raise GeometryError(f"cone order {b} at vertex {v} must exceed -1")

    @property
    def vertex_ids(self) -> np.ndarray:
        return np.array([v for v, _ in self.entries], dtype=np.int64)

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for _, b in self.entries], dtype=float)

    @property
    def degree(self) -> float:
        return float(sum(b for _, b in self.entries))

    def check_mesh(self, mesh: TriMesh) -> None:
        ids = self.vertex_ids
        if ids.size and (ids.min() < 0 or ids.max() >= mesh.n_vertices):
            raise GeometryError("divisor references a vertex outside the mesh")

    def without_trivial(self) -> "Divisor":
        return Divisor(tuple((v, b) for v, b in self.entries if b != 0.0))

    @classmethod
    def snapped(cls, mesh: TriMesh, points: Iterable[tuple[Sequence[float], float]]) -> "Divisor":
        """Place each cone at the mesh vertex nearest the requested direction."""
        entries = []
        for direction, beta in points:
            d = np.asarray(direction, dtype=float)
            d = d / np.linalg.norm(d)
            entries.append((int(np.argmax(mesh.vertices @ d)), beta))
        return cls(tuple(entries))


def euler_characteristic(divisor: Divisor) -> float:
    """Euler characteristic of the sphere with a divisor: ``2 + |beta|``."""
    return 2.0 + divisor.degree


def _density(points: np.ndarray, cones: np.ndarray, betas: np.ndarray) -> np.ndarray:
    rho = np.ones(len(points))
    for p, b in zip(cones, betas):
        rho *= (np.linalg.norm(points - p, axis=1) / 2.0) ** (2.0 * b)
    return rho


def chordal_density(mesh: TriMesh, divisor: Divisor, node) -> float:
    x = np.asarray(node, dtype=float).reshape(1, 3)
    cones = mesh.vertices[divisor.vertex_ids] if divisor.entries else np.zeros((0, 3))
    for p, b in zip(cones, divisor.betas):
        if b < 0 and np.linalg.norm(x[0] - p) == 0.0:
            raise SingularNodeError("density is infinite at a cone point with negative order")
    return float(_density(x, cones, divisor.betas)[0])


def curvature_prefactor(divisor: Divisor) -> float:
    return 1.0 + divisor.degree / 2.0


def background_curvature(mesh: TriMesh, divisor: Divisor) -> np.ndarray:
    """Nodal values of the fixture ``kappa = (1 + |beta|/2) / rho``; zero at cones."""
    if divisor.entries and np.any(divisor.betas >= 0):
        raise UnsupportedFixtureError("curvature fixture requires every beta_i < 0")
    if not divisor.entries:
        return np.ones(mesh.n_vertices)
    divisor.check_mesh(mesh)
    ids = divisor.vertex_ids
    kappa = np.zeros(mesh.n_vertices)
    free = np.ones(mesh.n_vertices, dtype=bool)
    free[ids] = False
    rho = _density(mesh.vertices[free], mesh.vertices[ids], divisor.betas)
    kappa[free] = curvature_prefactor(divisor) / rho
    return kappa


@dataclass(frozen=True)
class Quadrature:
    """Quadrature nodes for integrals against ``dv_g`` on the sphere.

    ``weight`` already contains the density (it integrates ``f dv_g``);
    ``area_weight`` integrates against ``dv_g0``; ``bary`` holds the values
    of the three hat functions of ``face`` at the node.
    """

    face: np.ndarray
    bary: np.ndarray
    points: np.ndarray
    weight: np.ndarray
    area_weight: np.ndarray


def _solid_angle_jacobian(y: np.ndarray, offset: np.ndarray) -> np.ndarray:
    # radial projection of a flat face onto the sphere: dA_sphere = (n.y)/|y|^3 dA_flat
    return offset / np.linalg.norm(y, axis=1) ** 3


def build_quadrature(mesh: TriMesh, divisor: Divisor, radial_order: int = 6, angular_order: int = 4) -> Quadrature:
    """Mid-edge rule on ordinary faces; on cone-incident faces a Duffy map with
    Gauss-Jacobi nodes integrating ``r^(2 beta + 1)`` exactly in the radial
    direction and Gauss-Legendre nodes in angle."""
    divisor.check_mesh(mesh)
    V, F = mesh.vertices, mesh.faces
    cone_beta = dict(divisor.entries)
    cones = V[divisor.vertex_ids] if divisor.entries else np.zeros((0, 3))
    betas = divisor.betas

    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    cr = np.cross(b - a, c - a)
    area2 = np.linalg.norm(cr, axis=1)
    if np.any(area2 <= 2 * AREA_FLOOR):
        bad = int(np.argmin(area2))
        raise GeometryError(f"face {bad} is degenerate")
    normal = cr / area2[:, None]
    offset = np.einsum("ij,ij->i", normal, a)

    in_cone = np.isin(F, divisor.vertex_ids) if divisor.entries else np.zeros(F.shape, bool)
    n_cone = in_cone.sum(axis=1)
    if np.any(n_cone > 1):
        raise GeometryError(f"face {int(np.argmax(n_cone > 1))} touches two cone points; refine the mesh")
    regular = np.flatnonzero(n_cone == 0)

    faces, barys, weights = [], [], []
    # mid-edge rule
    mid_bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    for bary in mid_bary:
        faces.append(regular)
        barys.append(np.tile(bary, (len(regular), 1)))
        weights.append(area2[regular] / 6.0)
    flat_face = np.concatenate(faces)
    flat_bary = np.concatenate(barys)
    flat_w = np.concatenate(weights)

    cone_faces = np.flatnonzero(n_cone == 1)
    if cone_faces.size:
        t_nodes, t_w = roots_legendre(angular_order)
        t_nodes, t_w = 0.5 * (t_nodes + 1.0), 0.5 * t_w
        sing_face, sing_bary, sing_w = [], [], []
        for fi in cone_faces:
            k = int(np.argmax(in_cone[fi]))
            beta = cone_beta[int(F[fi, k])]
            alpha = 2.0 * beta + 1.0
            # int_0^1 s^alpha f(s) ds via Jacobi on [-1, 1] with weight (1+x)^alpha
            x, w = roots_jacobi(radial_order, 0.0, alpha)
            s_nodes = 0.5 * (x + 1.0)
            s_w = w * 0.5 ** (alpha + 1.0)
            for s, ws in zip(s_nodes, s_w):
                for t, wt in zip(t_nodes, t_w):
                    bary = np.zeros(3)
                    bary[k] = 1.0 - s
                    bary[(k + 1) % 3] = s * (1.0 - t)
                    bary[(k + 2) % 3] = s * t
                    sing_face.append(fi)
                    sing_bary.append(bary)
                    # Duffy jacobian 2A*s; the s^(2 beta + 1) factor lives in ws
                    sing_w.append(ws * wt * area2[fi] / s ** (2.0 * beta))
        flat_face = np.concatenate([flat_face, np.array(sing_face, dtype=np.int64)])
        flat_bary = np.concatenate([flat_bary, np.array(sing_bary)])
        flat_w = np.concatenate([flat_w, np.array(sing_w)])

    y = np.einsum("qk,qkj->qj", flat_bary, V[F[flat_face]])
    jac = _solid_angle_jacobian(y, offset[flat_face])
    x = y / np.linalg.norm(y, axis=1, keepdims=True)
    # on cone faces flat_w carries s^(-2 beta) so that weight = area_weight * rho
    area_weight = flat_w * jac
    weight = area_weight * _density(x, cones, betas)
    return Quadrature(flat_face, flat_bary, x, weight, area_weight)


@dataclass(frozen=True, eq=False)
class ConicalGeometry:
    """Mesh + divisor + density quadrature + background curvature.

    ``kappa_fixture`` is the pointwise closed-form curvature; ``kappa`` is the
    same field rescaled by ``gb_scale`` so that its lumped integral satisfies
    Gauss-Bonnet to round-off.  The discrete equations use ``kappa``.
    """

    mesh: TriMesh
    divisor: Divisor
    quadrature: Quadrature
    mass: np.ndarray
    kappa_fixture: np.ndarray
    kappa: np.ndarray
    gb_scale: float
    volume: float
    cone_mask: np.ndarray = field(repr=False)

    @property
    def euler_characteristic(self) -> float:
        return euler_characteristic(self.divisor)

    @property
    def gauss_bonnet_target(self) -> float:
        return 2.0 * math.pi * self.euler_characteristic

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices


def lumped_mass(mesh: TriMesh, quad: Quadrature) -> np.ndarray:
    """Row-sum lumped mass ``m_i = int rho phi_i dv_g0``."""
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.faces[quad.face].ravel(), (quad.bary * quad.weight[:, None]).ravel())
    return m


def build_geometry(mesh: TriMesh, divisor: Divisor, gb_tol: float | None = None) -> ConicalGeometry:
    divisor = divisor.without_trivial()
    divisor.check_mesh(mesh)
    quad = build_quadrature(mesh, divisor)
    mass = lumped_mass(mesh, quad)
    if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
        raise GeometryError("nonpositive lumped mass; quadrature failed near a cone")
    kappa_fix = background_curvature(mesh, divisor)
    target = 2.0 * math.pi * euler_characteristic(divisor)
    raw = float(kappa_fix @ mass)
    if gb_tol is not None and abs(raw - target) > gb_tol:
        raise GeometryError(f"Gauss-Bonnet residual {abs(raw - target):.3e} exceeds {gb_tol:.3e}")
    scale = target / raw
    cone_mask = np.zeros(mesh.n_vertices, dtype=bool)
    cone_mask[divisor.vertex_ids] = True
    kappa = kappa_fix * scale
    kappa.setflags(write=False)
    kappa_fix.setflags(write=False)
    mass.setflags(write=False)
    return ConicalGeometry(
        mesh=mesh,
        divisor=divisor,
        quadrature=quad,
        mass=mass,
        kappa_fixture=kappa_fix,
        kappa=kappa,
        gb_scale=scale,
        volume=float(quad.weight.sum()),
        cone_mask=cone_mask,
    )


def gauss_bonnet_residual(geom: ConicalGeometry) -> float:
    """``|int kappa dv_g - 2 pi chi|`` for the nodal fixture under the lumped quadrature."""
    return abs(float(geom.kappa_fixture @ geom.mass) - geom.gauss_bonnet_target)
