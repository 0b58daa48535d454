"""Structured tetrahedral meshes of the catalog domains.

Each hexahedron of a uniform grid with spacing ``h = 2/n`` is split into the six Kuhn
tetrahedra around the diagonal pointing away from the origin.  The pattern is therefore
mirrored across every coordinate plane, which makes the reflection ``x -> -x`` an exact
mesh symmetry and resolves the lines ``z = ±y`` of the plane ``x = 0``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import ClassificationError, MeshError, ParameterError, RefinementError
from .catalog import Constellation, build_constellation

OUTER, SLIT_PLUS, SLIT_MINUS, INTERFACE = 0, 1, 2, 3
FACET_KIND_NAMES = ("OUTER", "SLIT_PLUS", "SLIT_MINUS", "INTERFACE")
UNSET, LABEL_E, LABEL_M = -1, 0, 1

REGION_NAMES = ("x+z+", "x+z-", "x-z+", "x-z-")

# faces opposite vertex 0..3, outward for positively oriented tets
LOCAL_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


def mirror_region(name: str) -> str:
    """Region label exchanged with ``name`` by the reflection in the first coordinate."""
    if name.startswith("x+"):
        return "x-" + name[2:]
    if name.startswith("x-"):
        return "x+" + name[2:]
    return name


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Immutable tetrahedral mesh with labeled boundary facets and a doubled slit.

    ``crack_pairs[k] = (p, m)`` pairs the copy ``p`` used by tets on the ``x > 0`` side of a
    slit with the copy ``m`` used on the ``x < 0`` side.  ``symmetry_map`` (when present) is
    the vertex permutation realizing the reflection ``x -> -x``.
    """

    vertices: np.ndarray
    tets: np.ndarray
    regions: np.ndarray
    region_names: tuple
    facets: np.ndarray
    facet_tet: np.ndarray
    facet_kind: np.ndarray
    facet_label: np.ndarray
    crack_pairs: np.ndarray
    vertex_side: np.ndarray
    symmetry_map: Optional[np.ndarray] = None
    h: float = 0.0
    name: str = ""

    def __post_init__(self):
        for f in ("vertices", "tets", "regions", "facets", "facet_tet", "facet_kind",
                  "facet_label", "crack_pairs", "vertex_side", "symmetry_map"):
            v = getattr(self, f)
            if v is not None:
                object.__setattr__(self, f, _frozen(v))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.tets)

    def total_volume(self) -> float:
        return float(np.sum(self.volumes()))

    def centroids(self) -> np.ndarray:
        return self.vertices[self.tets].mean(axis=1)

    def facet_coords(self) -> np.ndarray:
        return self.vertices[self.facets]

    def facet_centroids(self) -> np.ndarray:
        return self.facet_coords().mean(axis=1)

    def region_of(self, name: str) -> np.ndarray:
        """Boolean tet mask of a named region."""
        if name not in self.region_names:
            return np.zeros(self.n_tets, bool)
        return self.regions == self.region_names.index(name)

    def present_regions(self) -> list[str]:
        return [self.region_names[i] for i in np.unique(self.regions)]

    def dirichlet_vertices(self) -> np.ndarray:
        """Boolean mask of vertices in the closure of the E-labeled facets."""
        mask = np.zeros(self.n_vertices, bool)
        mask[self.facets[self.facet_label == LABEL_E].ravel()] = True
        return mask

    def with_labels(self, labels: np.ndarray) -> "TetMesh":
        return replace(self, facet_label=np.asarray(labels, dtype=np.int8))


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = vertices[tets]
    d1, d2, d3 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", d1, np.cross(d2, d3)) / 6.0


def grid_coordinate(i, n):
    """Coordinate ``-1 + 2 i / n`` evaluated so that index ``n - i`` gives its exact negative."""
    return (2.0 * np.asarray(i, float) - n) / n


def _kuhn_tets(lo, hi, n):
    """Tets of the octant-mirrored Kuhn split of the cells of the index box ``[lo, hi)``."""
    shape = hi - lo + 1
    cells = np.stack(np.meshgrid(*[np.arange(lo[a], hi[a]) for a in range(3)],
                                 indexing="ij"), axis=-1).reshape(-1, 3)
    sign = np.sign(2 * cells + 1 - n)
    near = (sign < 0).astype(int)

    def vid(offsets):
        g = cells + offsets - lo
        return (g[:, 0] * shape[1] + g[:, 1]) * shape[2] + g[:, 2]

    tets = []
    for perm in itertools.permutations(range(3)):
        corner = near.copy()
        ids = [vid(corner)]
        for axis in perm:
            corner = corner.copy()
            corner[:, axis] = 1 - corner[:, axis]
            ids.append(vid(corner))
        tets.append(np.stack(ids, axis=1))
    return np.stack(tets, axis=1).reshape(-1, 4), np.repeat(sign, 6, axis=0)


def generate_mesh(c: Constellation, n: int) -> TetMesh:
    """Mesh ``c`` with ``n`` cells per unit-cube side (``h = 2/n``); facets are left unlabeled.

    Vertices strictly inside a slit are doubled; vertices on the slit tip are shared.
    """
    if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise ParameterError(f"subdivision count must be an even integer >= 2, got {n!r}")
    n = int(n)
    bounds = c.bounds
    lo = np.rint((bounds[:, 0] + 1.0) * n / 2).astype(int)
    hi = np.rint((bounds[:, 1] + 1.0) * n / 2).astype(int)
    shape = hi - lo + 1
    idx = np.stack(np.meshgrid(*[np.arange(lo[a], hi[a] + 1) for a in range(3)],
                               indexing="ij"), axis=-1).reshape(-1, 3)
    vertices = grid_coordinate(idx, n)
    tets, cell_sign = _kuhn_tets(lo, hi, n)
    n_grid = len(vertices)

    vertex_side = np.zeros(n_grid, np.int8)
    crack_pairs = np.zeros((0, 2), int)
    if c.slit is not None:
        on_plane = idx[:, 0] * 2 == n
        split = on_plane & c.slit.splits(vertices[:, 1], vertices[:, 2])
        plus = np.flatnonzero(split)
        minus = n_grid + np.arange(len(plus))
        remap = np.arange(n_grid + len(plus))
        remap[plus] = minus
        left = cell_sign[:, 0] < 0
        tets[left] = remap[tets[left]]
        vertices = np.vstack([vertices, vertices[plus]])
        vertex_side = np.concatenate([vertex_side, -np.ones(len(plus), np.int8)])
        vertex_side[plus] = 1
        crack_pairs = np.stack([plus, minus], axis=1)

    vol = signed_volumes(vertices, tets)
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]

    centroids = vertices[tets].mean(axis=1)
    region_idx = np.where(centroids[:, 0] > 0, 0, 2) + np.where(centroids[:, 2] > 0, 0, 1)

    facets, facet_tet, facet_kind = _boundary_facets(vertices, tets, centroids, c, bounds)

    symmetry_map = None
    if c.symmetric:
        mirror_idx = idx.copy()
        mirror_idx[:, 0] = n - idx[:, 0]
        g = mirror_idx - lo
        grid_map = (g[:, 0] * shape[1] + g[:, 1]) * shape[2] + g[:, 2]
        symmetry_map = np.concatenate([grid_map, np.zeros(len(crack_pairs), int)])
        if len(crack_pairs):
            symmetry_map[crack_pairs[:, 0]] = crack_pairs[:, 1]
            symmetry_map[crack_pairs[:, 1]] = crack_pairs[:, 0]

    return TetMesh(
        vertices=vertices, tets=tets, regions=region_idx.astype(np.int8),
        region_names=REGION_NAMES, facets=facets, facet_tet=facet_tet,
        facet_kind=facet_kind, facet_label=np.full(len(facets), UNSET, np.int8),
        crack_pairs=crack_pairs, vertex_side=vertex_side, symmetry_map=symmetry_map,
        h=2.0 / n, name=c.name)


def _boundary_facets(vertices, tets, centroids, c, bounds):
    faces = tets[:, LOCAL_FACES].reshape(-1, 3)
    owner = np.repeat(np.arange(len(tets)), 4)
    coords = vertices[faces]
    fc = coords.mean(axis=1)
    on_plane = np.all(coords[:, :, 0] == 0.0, axis=1)

    slit_face = np.zeros(len(faces), bool)
    if c.slit is not None:
        slit_face = on_plane & c.slit.contains(fc[:, 1], fc[:, 2])
        corner_in = c.slit.contains(coords[:, :, 1], coords[:, :, 2]).all(axis=1)
        bad = slit_face & ~corner_in
        if np.any(bad):
            raise RefinementError(
                f"slit {c.slit.kind.value} not resolved at this resolution; first straddling "
                f"facet has corners {coords[np.flatnonzero(bad)[0]].tolist()}")

    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    single = counts[inverse.ravel()] == 1
    outer = single & ~slit_face
    on_box = np.zeros(len(faces), bool)
    for a in range(3):
        for b in bounds[a]:
            on_box |= np.all(coords[:, :, a] == b, axis=1)
    if np.any(outer & ~on_box):
        raise MeshError("internal faces without a neighbor found off the domain boundary")

    keep = outer | slit_face
    kind = np.full(len(faces), OUTER, np.int8)
    kind[slit_face & (centroids[owner][:, 0] > 0)] = SLIT_PLUS
    kind[slit_face & (centroids[owner][:, 0] < 0)] = SLIT_MINUS
    return faces[keep], owner[keep], kind[keep]


def classify_boundary(mesh: TetMesh, c: Constellation) -> TetMesh:
    """Label every boundary facet E or M according to ``c`` (idempotent).

    Slit facets of either side are Dirichlet.  Interface facets created by splitting keep
    their label.
    """
    coords = mesh.facet_coords()
    cent = coords.mean(axis=1)
    labels = np.array(mesh.facet_label, dtype=np.int8)
    bounds = c.bounds
    on_box = np.zeros(len(coords), bool)
    for a in range(3):
        for b in bounds[a]:
            on_box |= np.all(coords[:, :, a] == b, axis=1)
    neumann = c.in_neumann(cent, coords)
    slit = (mesh.facet_kind == SLIT_PLUS) | (mesh.facet_kind == SLIT_MINUS)
    outer = mesh.facet_kind == OUTER
    unmatched = outer & ~on_box & ~neumann
    if np.any(unmatched):
        k = np.flatnonzero(unmatched)[0]
        raise ClassificationError(
            f"facet {k} with corners {coords[k].tolist()} matches neither E nor M of {c.name}")
    labels[slit] = LABEL_E
    labels[outer & neumann] = LABEL_M
    labels[outer & ~neumann] = LABEL_E
    interface_unset = (mesh.facet_kind == INTERFACE) & (labels == UNSET)
    labels[interface_unset] = LABEL_E
    return mesh.with_labels(labels)


def build_mesh(name_or_constellation, n: int) -> TetMesh:
    """Generate and classify the mesh of a catalog constellation."""
    c = (build_constellation(name_or_constellation)
         if isinstance(name_or_constellation, str) else name_or_constellation)
    return classify_boundary(generate_mesh(c, n), c)


def check_symmetry(mesh: TetMesh) -> bool:
    """Exhaustive check that ``symmetry_map`` is an involutive mesh automorphism for ``x -> -x``."""
    s = mesh.symmetry_map
    if s is None:
        return False
    if not np.array_equal(s[s], np.arange(mesh.n_vertices)):
        return False
    mirrored = mesh.vertices * np.array([-1.0, 1.0, 1.0])
    if not np.array_equal(mesh.vertices[s], mirrored):
        return False
    src = np.sort(s[mesh.tets], axis=1)
    dst = np.sort(mesh.tets, axis=1)
    order_src = np.lexsort(src.T[::-1])
    order_dst = np.lexsort(dst.T[::-1])
    if not np.array_equal(src[order_src], dst[order_dst]):
        return False
    names = mesh.region_names
    mirrored_regions = np.array([names.index(mirror_region(nm)) for nm in names])
    return bool(np.array_equal(mirrored_regions[mesh.regions[order_src]],
                               mesh.regions[order_dst]))


def tet_image_index(mesh: TetMesh) -> np.ndarray:
    """For each tet ``t``, the index of the tet occupied by its mirror image."""
    s = mesh.symmetry_map
    if s is None:
        raise MeshError("mesh has no symmetry map")
    src = np.sort(s[mesh.tets], axis=1)
    dst = np.sort(mesh.tets, axis=1)
    inv = np.unique(np.vstack([dst, src]), axis=0, return_inverse=True)[1].ravel()
    lookup = np.full(inv.max() + 1, -1)
    lookup[inv[:mesh.n_tets]] = np.arange(mesh.n_tets)
    image = lookup[inv[mesh.n_tets:]]
    if np.any(image < 0):
        raise MeshError("symmetry map does not map tets onto tets")
    return image
