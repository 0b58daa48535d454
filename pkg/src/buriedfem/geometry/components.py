"""Connected components of tet selections, with index maps back to the parent mesh."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh import INTERFACE, LABEL_E, LOCAL_FACES, SLIT_MINUS, SLIT_PLUS, TetMesh


@dataclass(frozen=True, eq=False)
class Component:
    mesh: TetMesh
    vertex_map: np.ndarray  # component vertex -> parent vertex
    tet_map: np.ndarray  # component tet -> parent tet

    def volume(self) -> float:
        return self.mesh.total_volume()


def face_adjacency(mesh: TetMesh):
    """Pairs of tets sharing a face that is not part of a slit.

    Returns ``(pairs, local_faces)`` where ``local_faces[k]`` holds the local face numbers of
    the shared face in each tet of ``pairs[k]``.
    """
    faces = np.sort(mesh.tets[:, LOCAL_FACES].reshape(-1, 3), axis=1)
    slit = (mesh.facet_kind == SLIT_PLUS) | (mesh.facet_kind == SLIT_MINUS)
    slit_faces = np.sort(mesh.facets[slit], axis=1)
    _, inv = np.unique(np.vstack([faces, slit_faces]), axis=0, return_inverse=True)
    inv = inv.ravel()
    is_slit = np.zeros(inv.max() + 1, bool)
    is_slit[inv[len(faces):]] = True
    inv = inv[:len(faces)]
    order = np.argsort(inv, kind="stable")
    sorted_inv = inv[order]
    dup = np.flatnonzero(sorted_inv[1:] == sorted_inv[:-1])
    first, second = order[dup], order[dup + 1]
    keep = ~is_slit[inv[first]]
    first, second = first[keep], second[keep]
    pairs = np.stack([first // 4, second // 4], axis=1)
    local = np.stack([first % 4, second % 4], axis=1)
    return pairs, local


def split_components(mesh: TetMesh, selector) -> list[Component]:
    """Split the selected tets into face-connected components.

    ``selector`` is a boolean tet mask, an integer label per tet (tets with different labels
    are never joined; negative labels are dropped), or a callable mapping the (T, 3) array of
    tet centroids to either of those.  Faces a component shares with unselected or
    differently labeled tets become new INTERFACE facets labeled E.
    """
    sel = selector(mesh.centroids()) if callable(selector) else selector
    sel = np.asarray(sel)
    labels = np.where(sel, 0, -1) if sel.dtype == bool else sel.astype(int)
    active = labels >= 0
    if not np.any(active):
        return []

    pairs, local = face_adjacency(mesh)
    same = (labels[pairs[:, 0]] == labels[pairs[:, 1]]) & active[pairs[:, 0]]
    graph = coo_matrix((np.ones(same.sum()), (pairs[same, 0], pairs[same, 1])),
                       shape=(mesh.n_tets, mesh.n_tets))
    _, comp = connected_components(graph, directed=False)
    comp = np.where(active, comp, -1)
    ids = [c for c in dict.fromkeys(comp[active].tolist())]

    out = []
    for cid in ids:
        tet_map = np.flatnonzero(comp == cid)
        out.append(_submesh(mesh, tet_map, pairs, local))
    return out


def _submesh(mesh: TetMesh, tet_map: np.ndarray, pairs, local) -> Component:
    inside = np.zeros(mesh.n_tets, bool)
    inside[tet_map] = True
    vertex_map = np.unique(mesh.tets[tet_map])
    new_vid = np.full(mesh.n_vertices, -1)
    new_vid[vertex_map] = np.arange(len(vertex_map))
    new_tid = np.full(mesh.n_tets, -1)
    new_tid[tet_map] = np.arange(len(tet_map))

    keep = inside[mesh.facet_tet]
    facets = [mesh.facets[keep]]
    owner = [mesh.facet_tet[keep]]
    kind = [mesh.facet_kind[keep]]
    label = [mesh.facet_label[keep]]

    a_in, b_in = inside[pairs[:, 0]], inside[pairs[:, 1]]
    for cut, t_col in ((a_in & ~b_in, 0), (b_in & ~a_in, 1)):
        t = pairs[cut, t_col]
        lf = local[cut, t_col]
        facets.append(mesh.tets[t][np.arange(len(t))[:, None], LOCAL_FACES[lf]])
        owner.append(t)
        kind.append(np.full(len(t), INTERFACE, np.int8))
        label.append(np.full(len(t), LABEL_E, np.int8))

    cp = mesh.crack_pairs
    both = (new_vid[cp[:, 0]] >= 0) & (new_vid[cp[:, 1]] >= 0) if len(cp) else np.zeros(0, bool)
    sub = TetMesh(
        vertices=mesh.vertices[vertex_map],
        tets=new_vid[mesh.tets[tet_map]],
        regions=mesh.regions[tet_map],
        region_names=mesh.region_names,
        facets=new_vid[np.concatenate(facets)],
        facet_tet=new_tid[np.concatenate(owner)],
        facet_kind=np.concatenate(kind),
        facet_label=np.concatenate(label),
        crack_pairs=new_vid[cp[both]] if len(cp) else np.zeros((0, 2), int),
        vertex_side=mesh.vertex_side[vertex_map],
        symmetry_map=None,
        h=mesh.h,
        name=mesh.name,
    )
    return Component(sub, vertex_map, tet_map)
