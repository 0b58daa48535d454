"""P1 finite elements for ``-div(rho grad u) = f`` with mixed boundary conditions.

Dirichlet conditions are homogeneous and imposed by elimination: a vertex is constrained iff
it lies on an E-labeled facet.  Doubled slit vertices are independent unknowns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, ellipticity_constant
from .errors import CoercivityError, InputError, MeshError, SolverError
from .geometry.mesh import TetMesh
from .quadrature import quadrature_points


# ---------------------------------------------------------------- element geometry

def canonical_order(mesh: TetMesh) -> np.ndarray:
    """Tet vertex order sorted by ``(y, z, |x|)``; identical for a tet and its mirror image."""
    p = mesh.vertices[mesh.tets]
    keys = np.stack([np.abs(p[:, :, 0]), p[:, :, 2], p[:, :, 1]])  # lexsort: last key first
    order = np.empty(mesh.tets.shape, int)
    for t0 in range(0, mesh.n_tets, 1 << 16):
        sl = slice(t0, t0 + (1 << 16))
        k = keys[:, sl]
        # sort each row of 4 by (y, z, |x|)
        idx = np.argsort(k[0], axis=1, kind="stable")
        idx = np.take_along_axis(idx, np.argsort(np.take_along_axis(k[1], idx, 1), axis=1,
                                                 kind="stable"), 1)
        idx = np.take_along_axis(idx, np.argsort(np.take_along_axis(k[2], idx, 1), axis=1,
                                                 kind="stable"), 1)
        order[sl] = idx
    return np.take_along_axis(mesh.tets, order, axis=1)


def _cross(a, b):
    return np.stack([a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                     a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                     a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]], axis=-1)


def element_geometry(vertices: np.ndarray, tets: np.ndarray):
    """``(|vol|, grads)`` with ``grads[t, i]`` the gradient of the i-th barycentric function.

    Evaluated with explicit products so that mirrored tets give mirrored gradients bit for bit.
    """
    p = vertices[tets]
    d1, d2, d3 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]
    c23, c31, c12 = _cross(d2, d3), _cross(d3, d1), _cross(d1, d2)
    det = d1[:, 0] * c23[:, 0] + d1[:, 1] * c23[:, 1] + d1[:, 2] * c23[:, 2]
    g1, g2, g3 = c23 / det[:, None], c31 / det[:, None], c12 / det[:, None]
    g0 = -(g1 + g2 + g3)
    return np.abs(det) / 6.0, np.stack([g0, g1, g2, g3], axis=1)


def tet_gradients(mesh: TetMesh, u: np.ndarray) -> np.ndarray:
    """Constant gradient of the P1 field ``u`` on every tet; exactly zero for constants."""
    _, g = element_geometry(mesh.vertices, mesh.tets)
    uu = np.asarray(u, float)[mesh.tets]
    du = uu[:, 1:] - uu[:, :1]
    return (du[:, 0, None] * g[:, 1] + du[:, 1, None] * g[:, 2] + du[:, 2, None] * g[:, 3])


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True, eq=False)
class StiffnessSystem:
    matrix: sp.csr_matrix
    mesh: TetMesh
    metadata: dict = field(default_factory=dict)


def element_matrices(mesh: TetMesh, rho: CoefficientField, tets: Optional[np.ndarray] = None):
    """``(tets, K)`` with ``K[t] = vol G rho G^T`` in the canonical vertex order."""
    tets = canonical_order(mesh) if tets is None else tets
    vol, g = element_geometry(mesh.vertices, tets)
    r = rho.per_tet(mesh)
    # rg[t, j, k] = sum_l rho[t, k, l] g[t, j, l], with the sum written out
    rg = (r[:, None, :, 0] * g[:, :, None, 0] + r[:, None, :, 1] * g[:, :, None, 1]
          + r[:, None, :, 2] * g[:, :, None, 2])
    k = (g[:, :, None, 0] * rg[:, None, :, 0] + g[:, :, None, 1] * rg[:, None, :, 1]
         + g[:, :, None, 2] * rg[:, None, :, 2])
    return tets, vol[:, None, None] * k


def sum_by_index(rows, cols, vals, n: int) -> sp.csr_matrix:
    """Sparse matrix from triplets with a summation order that does not depend on the
    order of the triplets (values at one position are added in sorted order)."""
    order = np.lexsort((vals, cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    start = np.flatnonzero(np.r_[True, (r[1:] != r[:-1]) | (c[1:] != c[:-1])])
    sums = np.add.reduceat(v, start)
    return sp.csr_matrix((sums, (r[start], c[start])), shape=(n, n))


def assemble(mesh: TetMesh, rho: CoefficientField) -> StiffnessSystem:
    """Global stiffness matrix over all vertices (boundary conditions not yet applied)."""
    ell = ellipticity_constant(rho)
    tets, k = element_matrices(mesh, rho)
    rows = np.repeat(tets, 4, axis=1).ravel()
    cols = np.tile(tets, (1, 4)).ravel()
    a = sum_by_index(rows, cols, k.ravel(), mesh.n_vertices)
    return StiffnessSystem(a, mesh, {"elements": mesh.n_tets, "ellipticity": ell})


def energy(system: StiffnessSystem, u, v=None) -> float:
    v = u if v is None else v
    return float(np.asarray(u) @ (system.matrix @ np.asarray(v)))


# ---------------------------------------------------------------- boundary conditions

@dataclass(frozen=True, eq=False)
class DofMap:
    free: np.ndarray  # bool per vertex
    index: np.ndarray  # free dof -> vertex

    @classmethod
    def from_mesh(cls, mesh: TetMesh) -> "DofMap":
        free = ~mesh.dirichlet_vertices()
        return cls(free, np.flatnonzero(free))

    @property
    def n_free(self) -> int:
        return len(self.index)

    def extend(self, x: np.ndarray) -> np.ndarray:
        u = np.zeros(len(self.free))
        u[self.index] = x
        return u


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    matrix: sp.csr_matrix
    dofmap: DofMap
    system: StiffnessSystem


def apply_bc(system: StiffnessSystem, dofmap: Optional[DofMap] = None) -> ReducedSystem:
    dofmap = DofMap.from_mesh(system.mesh) if dofmap is None else dofmap
    if len(dofmap.free) != system.matrix.shape[0]:
        raise MeshError("dof map and system sizes differ")
    a = system.matrix[dofmap.index][:, dofmap.index].tocsr()
    return ReducedSystem(a, dofmap, system)


# ---------------------------------------------------------------- right-hand sides

Density = Union[None, float, np.ndarray, Callable]


@dataclass(frozen=True, eq=False)
class RhsFunctional:
    """``<f, v> = ∫ f0 v + ∫ F · grad v + load · v``.

    ``density`` is a constant, a per-tet array, a nodal array (integrated with the
    consistent mass matrix) or a callable of points (integrated by quadrature).  ``flux`` is
    a per-tet (T, 3) array or a constant 3-vector.  ``load`` is an explicit nodal vector.
    """

    density: Density = None
    flux: Optional[np.ndarray] = None
    load: Optional[np.ndarray] = None
    quad_order: int = 4

    def _density_kind(self, mesh):
        d = self.density
        if d is None:
            return None
        if callable(d):
            return "callable"
        a = np.asarray(d, float)
        if a.ndim == 0:
            return "constant"
        if a.shape == (mesh.n_tets,) and a.shape != (mesh.n_vertices,):
            return "tet"
        if a.shape == (mesh.n_vertices,):
            return "nodal"
        raise InputError(f"density of shape {a.shape} fits neither tets nor vertices")

    def element_loads(self, mesh: TetMesh, eta: Optional[np.ndarray] = None) -> np.ndarray:
        """(T, 4) contributions ``<f, eta phi_i>`` on each tet (``eta = 1`` if omitted).

        With a P1 ``eta`` the density and flux parts are exact; an explicit ``load`` is
        paired with the interpolant of ``eta v``.
        """
        vol, g = element_geometry(mesh.vertices, mesh.tets)
        out = np.zeros((mesh.n_tets, 4))
        e = None if eta is None else np.asarray(eta, float)[mesh.tets]
        kind = self._density_kind(mesh)
        if kind in ("constant", "tet"):
            f0 = np.broadcast_to(np.asarray(self.density, float), (mesh.n_tets,))
            base = (f0 * vol / 4.0)[:, None] * np.ones((1, 4))
            # ∫ eta phi_i = vol/4 * (eta_i + sum eta) / 5
            out += base if e is None else base * ((e + e.sum(axis=1, keepdims=True)) / 5.0)
        elif kind == "nodal":
            fl = np.asarray(self.density, float)[mesh.tets]
            m = (vol / 20.0)[:, None, None] * (np.ones((4, 4)) + np.eye(4))
            if e is not None:
                s = e.sum(axis=1)[:, None, None]
                ei, ej = e[:, :, None], e[:, None, :]
                w = np.where(np.eye(4, dtype=bool), (2 * ei + s) / 6.0, (ei + ej + s) / 6.0)
                m = m * w
            out += np.einsum("tij,tj->ti", m, fl)
        elif kind == "callable":
            pts, bary, w = quadrature_points(mesh.vertices, mesh.tets, self.quad_order)
            fv = np.asarray(self.density(pts.reshape(-1, 3)), float).reshape(pts.shape[:2])
            if e is not None:
                fv = fv * (e @ bary.T)
            out += vol[:, None] * np.einsum("tq,q,qi->ti", fv, w, bary)
        if self.flux is not None:
            F = np.broadcast_to(np.asarray(self.flux, float), (mesh.n_tets, 3))
            fg = vol[:, None] * np.einsum("tk,tik->ti", F, g)
            if e is None:
                out += fg
            else:
                out += fg * e.mean(axis=1, keepdims=True)
                geta = tet_gradients(mesh, eta)
                out += (vol / 4.0 * np.einsum("tk,tk->t", F, geta))[:, None]
        return out

    def load_vector(self, mesh: TetMesh, eta: Optional[np.ndarray] = None) -> np.ndarray:
        b = np.bincount(mesh.tets.ravel(), weights=self.element_loads(mesh, eta).ravel(),
                        minlength=mesh.n_vertices)
        if self.load is not None:
            ld = np.asarray(self.load, float)
            if ld.shape != (mesh.n_vertices,):
                raise InputError("explicit load must have one entry per vertex")
            b = b + (ld if eta is None else ld * np.asarray(eta, float))
        return b


# ---------------------------------------------------------------- solver

@dataclass(frozen=True, eq=False)
class Solution:
    u: np.ndarray
    iterations: int
    residuals: list
    dofmap: DofMap

    def __array__(self, dtype=None, copy=None):
        return self.u if dtype is None else self.u.astype(dtype)

    def to_log(self) -> dict:
        return {"iterations": self.iterations, "residuals": [float(r) for r in self.residuals]}


def pcg(a: sp.spmatrix, b: np.ndarray, tol: float = 1e-10, maxiter: Optional[int] = None,
        x0: Optional[np.ndarray] = None):
    """Jacobi-preconditioned conjugate gradients; returns ``(x, iterations, rel. residuals)``.

    Stops when ``||b - A x|| <= tol ||b||``.
    """
    n = a.shape[0]
    maxiter = int(50 * math.sqrt(max(n, 1))) if maxiter is None else maxiter
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise CoercivityError("stiffness matrix has a non-positive diagonal entry")
    inv_d = 1.0 / diag
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    if bnorm == 0.0:
        return np.zeros(n), 0, [0.0]
    r = b - a @ x
    hist = [float(np.linalg.norm(r)) / bnorm]
    if hist[-1] <= tol:
        return x, 0, hist
    z = inv_d * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0:
            raise CoercivityError("stiffness matrix is not positive definite on the free dofs")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        hist.append(float(np.linalg.norm(r)) / bnorm)
        if hist[-1] <= tol:
            return x, it, hist
        z = inv_d * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise SolverError(f"CG did not reach {tol:g} in {maxiter} iterations "
                      f"(last relative residual {hist[-1]:.3g})", hist)


def solve(system: Union[StiffnessSystem, ReducedSystem], rhs, tol: float = 1e-10,
          dofmap: Optional[DofMap] = None) -> Solution:
    """Solve with homogeneous Dirichlet data; ``rhs`` is an RhsFunctional or nodal load vector."""
    if not 1e-14 <= tol <= 1e-6:
        raise InputError(f"tolerance must lie in [1e-14, 1e-6], got {tol:g}")
    red = system if isinstance(system, ReducedSystem) else apply_bc(system, dofmap)
    mesh = red.system.mesh
    if red.dofmap.free.all():
        raise CoercivityError("no Dirichlet vertices: the problem is not coercive")
    b = rhs.load_vector(mesh) if isinstance(rhs, RhsFunctional) else np.asarray(rhs, float)
    x, its, hist = pcg(red.matrix, b[red.dofmap.index], tol)
    return Solution(red.dofmap.extend(x), its, hist, red.dofmap)


def residual(u, system: Union[StiffnessSystem, ReducedSystem], rhs) -> float:
    """``||A u - b|| / ||b||`` over the free dofs (``||A u||`` when ``b = 0``)."""
    red = system if isinstance(system, ReducedSystem) else apply_bc(system)
    mesh = red.system.mesh
    b = rhs.load_vector(mesh) if isinstance(rhs, RhsFunctional) else np.asarray(rhs, float)
    idx = red.dofmap.index
    r = red.matrix @ np.asarray(u, float)[idx] - b[idx]
    bn = float(np.linalg.norm(b[idx]))
    return float(np.linalg.norm(r)) / bn if bn > 0 else float(np.linalg.norm(r))


def dual_norm(red: ReducedSystem, r_free: np.ndarray, tol: float = 1e-12) -> float:
    """Discrete dual norm ``sqrt(r^T A^{-1} r)`` of a residual on the free dofs."""
    if not np.any(r_free):
        return 0.0
    y, _, _ = pcg(red.matrix, r_free, tol)
    return math.sqrt(max(float(r_free @ y), 0.0))


# ---------------------------------------------------------------- localization

def localize(mesh: TetMesh, u, eta, rho: CoefficientField, f: RhsFunctional) -> RhsFunctional:
    """Right-hand side of the equation solved by ``eta u``.

    ``<f_loc, v> = <f, eta v> + ∫ u rho grad(eta)·grad(v) - ∫ v rho grad(u)·grad(eta)``,
    returned as an explicit load vector (exact for P1 ``u``, ``eta``, ``v``).
    """
    eta = np.asarray(eta, float)
    if eta.shape != (mesh.n_vertices,):
        raise InputError("cutoff must have one value per vertex")
    if np.any(eta < 0) or np.any(eta > 1):
        raise InputError(f"cutoff must take values in [0, 1], got [{eta.min():g}, {eta.max():g}]")
    u = np.asarray(u, float)
    vol, g = element_geometry(mesh.vertices, mesh.tets)
    r = rho.per_tet(mesh)
    geta = tet_gradients(mesh, eta)
    gu = tet_gradients(mesh, u)
    rgeta = np.einsum("tkl,tl->tk", r, geta)
    term_u = (vol * u[mesh.tets].mean(axis=1))[:, None] * np.einsum("tk,tik->ti", rgeta, g)
    term_v = (vol / 4.0 * np.einsum("tk,tk->t", gu, rgeta))[:, None] * np.ones((1, 4))
    contrib = f.element_loads(mesh, eta) + (term_u - term_v)
    b = np.bincount(mesh.tets.ravel(), weights=contrib.ravel(), minlength=mesh.n_vertices)
    if f.load is not None:
        b = b + np.asarray(f.load, float) * eta
    return RhsFunctional(load=b)


# ---------------------------------------------------------------- norms

def _fsum(x) -> float:
    return math.fsum(np.asarray(x, float).ravel().tolist())


def seminorm_w1p(mesh: TetMesh, u, p: float = 2.0) -> float:
    """``(∫ |grad u|^p)^{1/p}``, summed with correct rounding (order independent)."""
    vol, _ = element_geometry(mesh.vertices, mesh.tets)
    gn = np.sqrt(np.einsum("tk,tk->t", *(2 * [tet_gradients(mesh, u)])))
    return _fsum(vol * gn ** p) ** (1.0 / p)


def norm_lp(mesh: TetMesh, u, p: float = 2.0, order: int = 3) -> float:
    """``(∫ |u|^p)^{1/p}`` by conical-product quadrature (exact for even ``p <= 2 order - 1``)."""
    vol, _ = element_geometry(mesh.vertices, mesh.tets)
    from .quadrature import tet_rule
    bary, w = tet_rule(order)
    vals = np.asarray(u, float)[mesh.tets] @ bary.T  # (T, Q)
    return _fsum(vol * (np.abs(vals) ** p @ w)) ** (1.0 / p)


def norm_w1p(mesh: TetMesh, u, p: float = 2.0) -> float:
    """``(||u||_p^p + ||grad u||_p^p)^{1/p}``."""
    return (norm_lp(mesh, u, p) ** p + seminorm_w1p(mesh, u, p) ** p) ** (1.0 / p)


def h1_error(mesh: TetMesh, u, grad_exact: Callable, order: int = 4) -> float:
    """``|u - u*|_{H^1}`` for a P1 field ``u`` and the gradient of an exact solution."""
    vol, _ = element_geometry(mesh.vertices, mesh.tets)
    gu = tet_gradients(mesh, u)
    pts, _, w = quadrature_points(mesh.vertices, mesh.tets, order)
    ge = np.asarray(grad_exact(pts.reshape(-1, 3)), float).reshape(pts.shape)
    d = np.sum((ge - gu[:, None, :]) ** 2, axis=2)
    return math.sqrt(_fsum(vol * (d @ w)))


def spectral_norm(a: sp.spmatrix, tol: float = 1e-10) -> float:
    """Largest absolute eigenvalue of a symmetric sparse matrix (Lanczos)."""
    if a.nnz == 0 or not np.any(a.data):
        return 0.0
    if a.shape[0] <= 64:
        return float(np.max(np.abs(np.linalg.eigvalsh(a.toarray()))))
    v0 = np.ones(a.shape[0])
    return float(abs(spla.eigsh(a, k=1, which="LM", tol=tol, v0=v0,
                                return_eigenvectors=False)[0]))
