"""Reflection in the first coordinate and the reduction of symmetric problems to a half.

For an ι-invariant coefficient the full problem splits into an odd part, solved on the half
``x < 0`` with Dirichlet data on the symmetry plane Ξ, and an even part, solved on the same
half with Neumann data on Ξ outside the slit.  Both half solutions are extended back and
summed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coefficients import CoefficientField, check_iota_invariance
from .errors import CatalogError, InputError, MeshError, PreconditionError
from .fem import RhsFunctional, apply_bc, assemble, norm_w1p, residual, seminorm_w1p, solve
from .geometry.catalog import Constellation
from .geometry.components import Component, split_components
from .geometry.mesh import INTERFACE, LABEL_E, LABEL_M, TetMesh, build_mesh


def _require_map(mesh: TetMesh) -> np.ndarray:
    if mesh.symmetry_map is None:
        raise MeshError("mesh has no symmetry map")
    return mesh.symmetry_map


def reflect(mesh: TetMesh, u) -> np.ndarray:
    """``(Ψu)(x) = u(ιx)`` as a nodal permutation."""
    return np.asarray(u, float)[_require_map(mesh)]


def pull_load(mesh: TetMesh, b) -> np.ndarray:
    """Load vector of ``Ψ*f`` defined by ``<Ψ*f, v> = <f, Ψv>``."""
    return np.asarray(b, float)[_require_map(mesh)]


def split(mesh: TetMesh, u) -> tuple[np.ndarray, np.ndarray]:
    """``((u - Ψu)/2, (u + Ψu)/2)``; parities are exact, odd part vanishes exactly on Ξ."""
    u = np.asarray(u, float)
    v = reflect(mesh, u)
    return (u - v) / 2.0, (u + v) / 2.0


def plane_vertices(mesh: TetMesh) -> np.ndarray:
    """Vertices fixed by the symmetry map (the plane Ξ without doubled slit vertices)."""
    s = _require_map(mesh)
    return s == np.arange(mesh.n_vertices)


@dataclass(frozen=True, eq=False)
class HalfProblem:
    """The half ``x < 0`` of a symmetric mesh with the labels of one parity class."""

    component: Component
    parent: TetMesh
    variant: str  # "anti" or "sym"

    @property
    def mesh(self) -> TetMesh:
        return self.component.mesh

    @property
    def vertex_map(self) -> np.ndarray:
        return self.component.vertex_map

    def on_plane(self) -> np.ndarray:
        """Half-mesh vertices lying on Ξ (fixed by the reflection)."""
        s = self.parent.symmetry_map
        return s[self.vertex_map] == self.vertex_map

    def neumann_facets(self) -> np.ndarray:
        m = self.mesh
        return m.facet_coords()[m.facet_label == LABEL_M]


def make_half_problems(c: Constellation, mesh: Optional[TetMesh] = None, n: int = 8
                       ) -> tuple[HalfProblem, HalfProblem]:
    """Odd (Ξ Dirichlet) and even (Ξ minus slit Neumann) problems on the half ``x < 0``."""
    if not c.symmetric or c.slit is None:
        raise CatalogError(f"constellation {c.name!r} is not a symmetric slit constellation")
    mesh = build_mesh(c, n) if mesh is None else mesh
    _require_map(mesh)
    comps = split_components(mesh, lambda cen: cen[:, 0] < 0)
    if len(comps) != 1:
        raise MeshError(f"half x < 0 of {c.name!r} has {len(comps)} components, expected 1")
    comp = comps[0]
    interface = comp.mesh.facet_kind == INTERFACE
    anti_labels = np.where(interface, LABEL_E, comp.mesh.facet_label)
    sym_labels = np.where(interface, LABEL_M, comp.mesh.facet_label)
    anti = Component(comp.mesh.with_labels(anti_labels), comp.vertex_map, comp.tet_map)
    sym = Component(comp.mesh.with_labels(sym_labels), comp.vertex_map, comp.tet_map)
    return HalfProblem(anti, mesh, "anti"), HalfProblem(sym, mesh, "sym")


def _mirror_lookup(half: HalfProblem) -> tuple[np.ndarray, np.ndarray]:
    """For every parent vertex: half vertex holding its value, and whether it is mirrored."""
    parent = half.parent
    s = parent.symmetry_map
    where = np.full(parent.n_vertices, -1)
    where[half.vertex_map] = np.arange(len(half.vertex_map))
    mirrored = where < 0
    where[mirrored] = where[s[mirrored]]
    if np.any(where < 0):
        raise MeshError("half mesh and its mirror image do not cover the parent mesh")
    return where, mirrored


def extend_even(half: HalfProblem, w) -> np.ndarray:
    """``ŵ = w`` on the half, ``w ∘ ι`` on the mirror half; Ξ keeps its nodal (trace) value."""
    w = np.asarray(w, float)
    if len(w) != half.mesh.n_vertices:
        raise MeshError("field does not live on the half mesh")
    where, _ = _mirror_lookup(half)
    return w[where]


def extend_odd(half: HalfProblem, w) -> np.ndarray:
    """``w`` on the half and ``-w ∘ ι`` on the mirror half; ``w`` must vanish on Ξ."""
    w = np.asarray(w, float)
    if np.any(w[half.on_plane()] != 0):
        raise InputError("odd extension needs a field vanishing on the symmetry plane")
    where, mirrored = _mirror_lookup(half)
    return np.where(mirrored, -w[where], w[where])


def extend_zero(component: Component, psi, parent: TetMesh) -> np.ndarray:
    """Extension by zero of a field on a component whose interface facets are Dirichlet."""
    psi = np.asarray(psi, float)
    m = component.mesh
    if len(psi) != m.n_vertices:
        raise MeshError("field does not live on the component mesh")
    iface = (m.facet_kind == INTERFACE) & (m.facet_label == LABEL_E)
    nodes = np.unique(m.facets[iface])
    if np.any(psi[nodes] != 0):
        raise InputError("field does not vanish on the interface of the component")
    out = np.zeros(parent.n_vertices)
    out[component.vertex_map] = psi
    return out


@dataclass(frozen=True)
class SymmetryReport:
    anti_residual: float
    sym_residual: float
    reconstruction_error: Optional[float] = None
    anti_iterations: int = 0
    sym_iterations: int = 0

    def to_dict(self) -> dict:
        return {"anti_residual": self.anti_residual, "sym_residual": self.sym_residual,
                "reconstruction_error": self.reconstruction_error,
                "anti_iterations": self.anti_iterations, "sym_iterations": self.sym_iterations}


def half_loads(anti: HalfProblem, sym: HalfProblem, b: np.ndarray):
    """Right-hand sides of the two half problems from the full load vector ``b``."""
    mesh = anti.parent
    b = np.asarray(b, float)
    bs = pull_load(mesh, b)
    b_anti = ((b - bs) / 2.0)[anti.vertex_map]
    b_sym = ((b + bs) / 2.0)[sym.vertex_map]
    b_sym = np.where(sym.on_plane(), b_sym / 2.0, b_sym)
    return b_anti, b_sym


def solve_via_symmetry(c: Constellation, mesh: TetMesh, rho: CoefficientField,
                       f: RhsFunctional, tol: float = 1e-10, threads: int = 1,
                       direct: Optional[np.ndarray] = None):
    """Solve the full problem through its odd and even half problems.

    Returns ``(u, report)``.  If ``direct`` (a full solution) is given, the report carries the
    relative H1 difference to it.
    """
    if not check_iota_invariance(rho, mesh):
        raise PreconditionError("coefficient is not invariant under the reflection")
    anti, sym = make_half_problems(c, mesh)
    b_anti, b_sym = half_loads(anti, sym, f.load_vector(mesh))

    def run(half, rhs):
        system = assemble(half.mesh, rho)
        red = apply_bc(system)
        sol = solve(red, rhs, tol)
        return sol, residual(sol.u, red, rhs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(run, anti, b_anti)
            fs = pool.submit(run, sym, b_sym)
            (sa, ra), (ss, rs) = fa.result(), fs.result()
    else:
        (sa, ra), (ss, rs) = run(anti, b_anti), run(sym, b_sym)
    u = extend_odd(anti, sa.u) + extend_even(sym, ss.u)
    err = None
    if direct is not None:
        err = relative_h1_difference(mesh, u, direct)
    return u, SymmetryReport(ra, rs, err, sa.iterations, ss.iterations)


def relative_h1_difference(mesh: TetMesh, u, v) -> float:
    d = np.asarray(u, float) - np.asarray(v, float)
    ref = norm_w1p(mesh, v, 2.0)
    return norm_w1p(mesh, d, 2.0) / ref if ref > 0 else norm_w1p(mesh, d, 2.0)


def energy_seminorm(mesh: TetMesh, u) -> float:
    return seminorm_w1p(mesh, u, 2.0)
