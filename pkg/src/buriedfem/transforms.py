"""Piecewise-affine bi-Lipschitz maps and the transport of meshes, coefficients and fields.

A :class:`PiecewiseAffineMap` is a list of convex cells ``{x : N x <= c}`` with one affine
map each.  All maps used here are homogeneous or cut by planes through the origin, so their
Jacobians are exact per cell and the transformed bilinear forms can be compared to rounding
error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .coefficients import CoefficientField, spd_matrix
from .errors import AlignmentError, DefinitenessError, GeometryError, MeshError, SingularityError
from .geometry.catalog import SlitKind
from .fem import assemble
from .geometry.mesh import TetMesh, build_mesh, signed_volumes


@dataclass(frozen=True, eq=False)
class AffineMap:
    linear: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        a = np.array(self.linear, float).reshape(3, 3)
        b = np.array(self.offset, float).reshape(3)
        scale = max(float(np.max(np.abs(a))), 1e-300)
        if not abs(np.linalg.det(a)) > 1e-14 * scale ** 3:
            raise SingularityError(f"affine map is not invertible: linear part {a.tolist()}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "offset", b)

    def __call__(self, points) -> np.ndarray:
        return np.asarray(points, float) @ self.linear.T + self.offset

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.linear)
        return AffineMap(inv, -inv @ self.offset)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """``self ∘ inner``."""
        return AffineMap(self.linear @ inner.linear, self.linear @ inner.offset + self.offset)

    def to_dict(self) -> dict:
        return {"linear": _floats(self.linear), "offset": _floats(self.offset)}


def _floats(a):
    return [float(f"{v:.17g}") for v in np.asarray(a, float).ravel()]


@dataclass(frozen=True, eq=False)
class PiecewiseAffineMap:
    """Cells given as half-space lists ``(normals (k,3), rhs (k,))`` meaning ``normals @ x <= rhs``.

    A point is assigned to the first cell that contains it; pieces agree on shared faces so
    the choice does not matter there.
    """

    cells: tuple
    name: str = ""

    def __post_init__(self):
        cells = []
        for hs, amap in self.cells:
            normals, rhs = hs
            normals = np.array(normals, float).reshape(-1, 3)
            rhs = np.array(rhs, float).reshape(-1)
            cells.append(((normals, rhs), amap))
        object.__setattr__(self, "cells", tuple(cells))

    @classmethod
    def single(cls, amap: AffineMap, name: str = "") -> "PiecewiseAffineMap":
        return cls((((np.zeros((0, 3)), np.zeros(0)), amap),), name)

    @property
    def pieces(self) -> list[AffineMap]:
        return [a for _, a in self.cells]

    def cell_index(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        out = np.full(len(pts), -1)
        for k, ((normals, rhs), _) in enumerate(self.cells):
            inside = np.all(pts @ normals.T <= rhs + tol, axis=1) if len(rhs) else np.ones(len(pts), bool)
            out[(out < 0) & inside] = k
        if np.any(out < 0):
            raise AlignmentError(f"point {pts[np.flatnonzero(out < 0)[0]].tolist()} lies in no cell")
        return out

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        idx = self.cell_index(pts)
        out = np.empty_like(pts)
        for k, (_, amap) in enumerate(self.cells):
            sel = idx == k
            out[sel] = amap(pts[sel])
        return out.reshape(np.shape(points))

    def continuity_defect(self, points, tol: float = 1e-12) -> float:
        """Largest disagreement between pieces at the given points lying in several cells."""
        pts = np.atleast_2d(np.asarray(points, float))
        worst = 0.0
        members = []
        for (normals, rhs), amap in self.cells:
            inside = np.all(pts @ normals.T <= rhs + tol, axis=1) if len(rhs) else np.ones(len(pts), bool)
            members.append(inside)
        for i, j in itertools.combinations(range(len(self.cells)), 2):
            both = members[i] & members[j]
            if np.any(both):
                d = np.abs(self.cells[i][1](pts[both]) - self.cells[j][1](pts[both]))
                worst = max(worst, float(np.max(d)))
        return worst

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "cells": [{"halfspaces": [_floats(list(n) + [c]) for n, c in zip(*hs)],
                       "map": amap.to_dict()} for hs, amap in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseAffineMap":
        cells = []
        for cell in d["cells"]:
            hs = np.array(cell["halfspaces"], float).reshape(-1, 4)
            amap = AffineMap(np.array(cell["map"]["linear"]).reshape(3, 3), cell["map"]["offset"])
            cells.append(((hs[:, :3], hs[:, 3]), amap))
        return cls(tuple(cells), d.get("name", ""))


IOTA = PiecewiseAffineMap.single(AffineMap(np.diag([-1.0, 1.0, 1.0])), "iota")
IDENTITY = PiecewiseAffineMap.single(AffineMap(np.eye(3)), "identity")


def linear_map(matrix, name: str = "") -> PiecewiseAffineMap:
    return PiecewiseAffineMap.single(AffineMap(matrix), name)


def bilipschitz_constants(m: PiecewiseAffineMap) -> tuple[float, float]:
    """``(min over pieces of the smallest singular value, max of the largest)``."""
    lo, hi = np.inf, 0.0
    for amap in m.pieces:
        s = np.linalg.svd(amap.linear, compute_uv=False)
        if not s[-1] > 1e-14 * s[0]:
            raise SingularityError(f"degenerate piece with singular values {s.tolist()}")
        lo, hi = min(lo, float(s[-1])), max(hi, float(s[0]))
    return lo, hi


# ---------------------------------------------------------------- matrix normalization

def _sorted_eigh(a):
    w, v = np.linalg.eigh(a)
    w, v = w[::-1], v[:, ::-1].copy()
    for k in range(3):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if len(nz) and col[nz[0]] < 0:
            v[:, k] = -col
    return w, v


def normalize_matrix(a) -> np.ndarray:
    """Matrix ``b`` with ``b a b^T / |det b| = Id`` that maps span{e2, e3} onto itself.

    ``b = v s o``: ``o`` diagonalizes ``a`` (eigenvalues ``a1 >= a2 >= a3``), ``s`` rescales
    to ``diag(a2 a3, a1 a3, a1 a2)^{1/2}``, and the rotation ``v`` carries the image of the
    y-z plane under ``s o`` back to that plane.
    """
    a = np.asarray(a, float)
    if a.shape != (3, 3) or not np.allclose(a, a.T, rtol=0, atol=1e-14 * np.max(np.abs(a))):
        raise DefinitenessError("matrix must be a symmetric 3x3 array")
    a = spd_matrix(a)
    w, vecs = _sorted_eigh(a)
    if not w[-1] > 1e-12 * np.trace(a):
        raise DefinitenessError(f"matrix is not positive definite; eigenvalues {w.tolist()}")
    o = vecs.T
    s = np.diag(np.sqrt([w[1] * w[2], w[0] * w[2], w[0] * w[1]]))
    so = s @ o
    w2 = so[:, 1] / np.linalg.norm(so[:, 1])
    w3 = so[:, 2] - (so[:, 2] @ w2) * w2
    w3 /= np.linalg.norm(w3)
    w1 = np.cross(w2, w3)
    v = np.stack([w1, w2, w3])
    return v @ so


def normalization_residual(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(b @ a @ b.T / abs(np.linalg.det(b)) - np.eye(3))))


# ---------------------------------------------------------------- the convex-cover map

def build_l_map() -> PiecewiseAffineMap:
    """Identity on and below the plane ``z = x/4``; above it the linear map fixing the plane
    pointwise and sending ``(-1, 0, 0)`` to ``(0, 0, 1)``."""
    normal = np.array([[-1.0, 0.0, 4.0]])  # 4z - x <= 0 is "on or below"
    upper = np.array([[0.0, 0.0, 4.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 5.0]])
    return PiecewiseAffineMap((
        ((normal, [0.0]), AffineMap(np.eye(3))),
        ((-normal, [0.0]), AffineMap(upper)),
    ), "l_map")


# ---------------------------------------------------------------- slit straightening

SQRT_HALF = np.sqrt(0.5)
LEG_MINUS = np.array([0.0, -SQRT_HALF, -SQRT_HALF])
LEG_PLUS = np.array([0.0, -SQRT_HALF, SQRT_HALF])


def _plane_rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _check_plane(b):
    if max(abs(b[0, 1]), abs(b[0, 2])) > 1e-10 * np.max(np.abs(b)):
        raise GeometryError("map does not preserve the plane x = 0")


def straighten_slit_triangle(kind: SlitKind, b=None) -> PiecewiseAffineMap:
    """Two-piece map sending the legs of the triangle slit at 0 onto ``-e3`` and ``+e3``.

    The map is ``ω ∘ r ∘ b`` where ``b`` (default identity) preserves the plane ``x = 0``,
    ``r`` rotates within that plane so that the leg bisector points along ``-e2``, and ``ω``
    fixes the x-y plane and shears each of the half-spaces ``z <= 0``, ``z >= 0``.
    """
    if kind not in (SlitKind.SIGMA2, SlitKind.SIGMA3):
        raise GeometryError(f"straightening applies to the triangle slits, not {kind}")
    b = np.eye(3) if b is None else np.asarray(b, float)
    _check_plane(b)
    um, up = b @ LEG_MINUS, b @ LEG_PLUS
    um, up = um / np.linalg.norm(um), up / np.linalg.norm(up)
    if abs(um[1] * up[2] - um[2] * up[1]) < 1e-12:
        raise GeometryError("slit legs are parallel after the linear map")
    bis = um + up
    theta = np.arctan2(bis[2], -bis[1])
    r = _plane_rotation(theta)
    rb = r @ b
    legs = [r @ um, r @ up]
    neg = [l for l in legs if l[2] < 0][0]
    pos = [l for l in legs if l[2] > 0][0]

    def shear(leg, target):
        col = (target * np.array([0.0, 0.0, 1.0]) - leg[1] * np.array([0.0, 1.0, 0.0])) / leg[2]
        w = np.eye(3)
        w[:, 2] = col
        return w

    w_lo, w_hi = shear(neg, -1.0), shear(pos, 1.0)
    n = rb.T @ np.array([0.0, 0.0, 1.0])  # third coordinate after r b
    return PiecewiseAffineMap((
        ((n[None, :], [0.0]), AffineMap(w_lo @ rb)),
        ((-n[None, :], [0.0]), AffineMap(w_hi @ rb)),
    ), f"straighten_{kind.value}")


def normalize_sigma1(b) -> tuple[AffineMap, float]:
    """Rotation ``r`` in the y-z plane with ``r b e3`` along ``±e3`` and ``r b {y <= 0} = {y <= 0}``.

    Returns ``(r ∘ b, conditioning)``, where the conditioning is the condition number of
    ``r b`` restricted to the y-z plane.
    """
    b = np.asarray(b, float)
    _check_plane(b)
    be3 = b[:, 2]
    theta = np.arctan2(be3[1], be3[2])  # rotate (y, z) = (be3_y, be3_z) onto +z
    r = _plane_rotation(theta)
    rb = r @ b
    # of the two rotations aligning b e3 with the z-axis, keep the one fixing the side y <= 0
    if (rb @ np.array([0.0, -1.0, 0.0]))[1] > 0:
        r = _plane_rotation(theta + np.pi)
        rb = r @ b
    s = np.linalg.svd(rb[1:, 1:], compute_uv=False)
    return AffineMap(rb), float(s[0] / s[-1])


def _polytope_vertices(normals, rhs, tol=1e-12):
    pts = []
    for i, j, k in itertools.combinations(range(len(rhs)), 3):
        m = normals[[i, j, k]]
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        p = np.linalg.solve(m, rhs[[i, j, k]])
        if np.all(normals @ p <= rhs + tol):
            pts.append(p)
    return np.array(pts)


CUBE_HALFSPACES = (np.vstack([np.eye(3), -np.eye(3)]), np.ones(6))


def shrink_factor(m: PiecewiseAffineMap) -> float:
    """Largest ``α`` with ``α C`` contained in ``m(C)`` for a map that is linear on cones.

    Checks the vertices of every piece ``C ∩ m(cell)`` pulled back through the inverse piece.
    """
    worst = 0.0
    for (normals, rhs), amap in m.cells:
        inv = np.linalg.inv(amap.linear)
        img_normals = normals @ inv  # n.x <= c  <=>  (n A^-1).y <= c
        allN = np.vstack([CUBE_HALFSPACES[0], img_normals])
        allc = np.concatenate([CUBE_HALFSPACES[1], rhs])
        verts = _polytope_vertices(allN, allc)
        if len(verts):
            worst = max(worst, float(np.max(np.abs(verts @ inv.T))))
    if worst == 0.0:
        raise GeometryError("map pieces do not meet the cube")
    return 1.0 / worst


def normalize_neighborhood(kind: SlitKind, b=None) -> tuple[PiecewiseAffineMap, float]:
    """Straighten a triangle slit and rescale so the unit cube is covered.

    Returns ``(S ∘ ω ∘ r ∘ b, α)``; ``S = diag(1, ±1, 1)/α`` where the sign flips ``y`` for
    the square-minus-triangle slit so that its image is the half-plane ``{x = 0, y <= 0}``.
    """
    base = straighten_slit_triangle(kind, b)
    alpha = shrink_factor(base)
    flip = -1.0 if kind is SlitKind.SIGMA3 else 1.0
    s = np.diag([1.0, flip, 1.0]) / alpha
    cells = tuple((hs, AffineMap(s @ amap.linear)) for hs, amap in base.cells)
    return PiecewiseAffineMap(cells, f"normalize_{kind.value}"), alpha


# ---------------------------------------------------------------- transport of meshes

def tet_cells(m: PiecewiseAffineMap, mesh: TetMesh, tol: float = 1e-12) -> np.ndarray:
    """Cell of every tet; raises if a tet straddles two cells."""
    idx = m.cell_index(mesh.centroids(), tol=0.0)
    pts = mesh.vertices[mesh.tets]
    for k, ((normals, rhs), _) in enumerate(m.cells):
        sel = idx == k
        if not np.any(sel) or not len(rhs):
            continue
        scale = max(1.0, float(np.max(np.abs(pts))))
        bad = np.any(pts[sel] @ normals.T > rhs + tol * scale, axis=(1, 2))
        if np.any(bad):
            t = np.flatnonzero(sel)[np.flatnonzero(bad)[0]]
            raise AlignmentError(f"tet {t} straddles the pieces of map {m.name!r}")
    return idx


def _cell_region_names(mesh: TetMesh, cells: np.ndarray, n_cells: int):
    if n_cells == 1:
        return mesh.regions, tuple(mesh.region_names)
    names, index = [], {}
    new = np.empty(mesh.n_tets, np.int16)
    pair = mesh.regions.astype(np.int64) * n_cells + cells
    for key in np.unique(pair):
        index[key] = len(names)
        names.append(f"{mesh.region_names[key // n_cells]}@{key % n_cells}")
    lut = np.full(int(pair.max()) + 1, -1)
    for key, v in index.items():
        lut[key] = v
    new[:] = lut[pair]
    return new, tuple(names)


def map_mesh(m: PiecewiseAffineMap, mesh: TetMesh) -> TetMesh:
    """Image mesh with vertex ``i`` at ``m(x_i)`` (per-tet piece); tets are reoriented if needed.

    For maps with several cells, regions are split by cell and named ``region@cell``.
    """
    cells = tet_cells(m, mesh)
    new_vertices = np.empty_like(mesh.vertices)
    done = np.zeros(mesh.n_vertices, bool)
    for k, (_, amap) in enumerate(m.cells):
        vids = np.unique(mesh.tets[cells == k])
        vids = vids[~done[vids]]
        new_vertices[vids] = amap(mesh.vertices[vids])
        done[vids] = True
    tets = np.array(mesh.tets)
    flip = signed_volumes(new_vertices, tets) < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]
    regions, names = _cell_region_names(mesh, cells, len(m.cells))
    facets = np.array(mesh.facets)
    fflip = flip[mesh.facet_tet]
    facets[fflip] = facets[fflip][:, [0, 2, 1]]
    return TetMesh(
        vertices=new_vertices, tets=tets, regions=regions, region_names=names,
        facets=facets, facet_tet=mesh.facet_tet, facet_kind=mesh.facet_kind,
        facet_label=mesh.facet_label, crack_pairs=mesh.crack_pairs,
        vertex_side=mesh.vertex_side, symmetry_map=None, h=mesh.h, name=f"{mesh.name}|{m.name}")


def pushforward_coefficient(m: PiecewiseAffineMap, rho: CoefficientField, mesh: TetMesh
                            ) -> CoefficientField:
    """``ω = J ρ J^T / |det J|`` per (region, cell), keyed like the regions of ``map_mesh``."""
    cells = tet_cells(m, mesh)
    regions, names = _cell_region_names(mesh, cells, len(m.cells))
    vals = {}
    for r in np.unique(regions):
        t = np.flatnonzero(regions == r)[0]
        src_region = mesh.region_names[mesh.regions[t]]
        if src_region not in rho.values:
            raise AlignmentError(f"coefficient has no value on region {src_region!r}")
        j = m.cells[cells[t]][1].linear
        omega = j @ rho.values[src_region] @ j.T / abs(np.linalg.det(j))
        vals[names[r]] = spd_matrix(omega)
    out = CoefficientField(vals)
    for name, v in out.values.items():
        if not np.linalg.eigvalsh(v)[0] > 0:
            raise DefinitenessError(f"pushforward lost ellipticity on region {name!r}")
    return out


def vertex_correspondence(m: PiecewiseAffineMap, source: TetMesh, image: TetMesh,
                          tol: float = 1e-10) -> np.ndarray:
    """``corr[i]`` = image vertex sitting at ``m(x_i)``, matched through tet centroids so that
    doubled slit vertices are told apart."""
    if source.n_tets != image.n_tets:
        raise MeshError("image mesh does not have the tet count of the source mesh")
    cells = tet_cells(m, source)
    mapped = np.empty((source.n_tets, 4, 3))
    for k, (_, amap) in enumerate(m.cells):
        sel = cells == k
        mapped[sel] = amap(source.vertices[source.tets[sel]])
    scale = max(1.0, float(np.max(np.abs(image.vertices))))
    dist, match = cKDTree(image.centroids()).query(mapped.mean(axis=1))
    if np.any(dist > tol * scale):
        raise MeshError(f"image mesh does not carry the source mesh: centroid offset {dist.max():.3g}")
    img_pts = image.vertices[image.tets[match]]  # (T, 4, 3)
    d = np.linalg.norm(mapped[:, :, None, :] - img_pts[:, None, :, :], axis=-1)
    local = np.argmin(d, axis=2)
    if np.any(np.min(d, axis=2) > tol * scale):
        raise MeshError("image tet vertices do not match the mapped source vertices")
    img_ids = np.take_along_axis(image.tets[match], local, axis=1)
    corr = np.full(source.n_vertices, -1)
    corr[source.tets.ravel()] = img_ids.ravel()
    check = np.full(source.n_vertices, -1)
    check[source.tets.ravel()[::-1]] = img_ids.ravel()[::-1]
    if np.any(corr != check):
        raise MeshError("source vertex maps to several image vertices")
    return corr


def pullback_function(m: PiecewiseAffineMap, f, source: TetMesh, image: TetMesh) -> np.ndarray:
    """Nodal values of ``f ∘ m`` on ``source`` for a P1 field ``f`` on ``image = m(source)``."""
    f = np.asarray(f, float)
    if len(f) != image.n_vertices:
        raise MeshError(f"field has {len(f)} values, image mesh has {image.n_vertices} vertices")
    return f[vertex_correspondence(m, source, image)]


# ---------------------------------------------------------------- form identity

def l_map_source_mesh(n: int) -> TetMesh:
    """Cube mesh sheared by ``x -> x + 4z`` so that no tet straddles the plane of the l-map."""
    shear = np.eye(3)
    shear[0, 2] = 4.0
    return map_mesh(linear_map(shear, "shear"), build_mesh("cube", n))


def form_identity_defects(m: PiecewiseAffineMap, mesh: TetMesh, rho: CoefficientField,
                          pairs: int = 50, rng: Optional[np.random.Generator] = None
                          ) -> np.ndarray:
    """Relative defects of ``∫ ρ ∇(f∘m)·∇(g∘m) = ∫_{m(Λ)} ω ∇f·∇g`` for random P1 pairs.

    Each defect is ``|a_ρ(f∘m, g∘m) - a_ω(f, g)| / (|f∘m|_ρ |g∘m|_ρ)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    image = map_mesh(m, mesh)
    omega = pushforward_coefficient(m, rho, mesh)
    a_src = assemble(mesh, rho).matrix
    a_img = assemble(image, omega).matrix
    corr = vertex_correspondence(m, mesh, image)
    out = np.empty(pairs)
    for k in range(pairs):
        f_img = rng.standard_normal(image.n_vertices)
        g_img = rng.standard_normal(image.n_vertices)
        f, g = f_img[corr], g_img[corr]
        e_src = f @ (a_src @ g)
        e_img = f_img @ (a_img @ g_img)
        scale = np.sqrt((f @ (a_src @ f)) * (g @ (a_src @ g)))
        out[k] = abs(e_src - e_img) / scale
    return out
