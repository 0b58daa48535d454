import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from buriedfem.errors import CatalogError, ClassificationError, InputError, ParameterError, RefinementError
from buriedfem.geometry import (
    CATALOG, LABEL_E, LABEL_M, OUTER, SLIT_MINUS, SLIT_PLUS, UNSET, Classification, Constellation,
    Domain, Patch, SlitKind, SlitSurface, build_constellation, catalog_names, check_symmetry,
    check_two_set, classify_boundary, generate_mesh, signed_volumes, split_components,
    symmetric_slit_constellations, tet_image_index)
from buriedfem.geometry.catalog import domain_volume

from helpers import mesh
from oracles import angle_between, sector_area

SYMMETRIC = [n for n, c in CATALOG.items() if c.symmetric]


# ---------------------------------------------------------------- catalog

def test_required_entries_present():
    names = set(catalog_names())
    for required in ("cube_minus_sigma1", "cube_minus_sigma2", "cube_minus_sigma3",
                     "halfcube_minus_sigma1", "halfcube_minus_sigma1_top",
                     "halfcube_minus_sigma1_halftop", "halfcube_sym_possi1",
                     "halfcube_sym_possi2", "halfcube_sym_possi3", "halfcube_sym_possi4",
                     "neumann_edge_M7"):
        assert required in names


def test_unknown_name_lists_catalog():
    with pytest.raises(CatalogError) as err:
        build_constellation("no_such_thing")
    assert "cube_minus_sigma1" in str(err.value)


def test_cube_minus_sigma1_is_full_dirichlet():
    c = build_constellation("cube_minus_sigma1")
    assert c.domain is Domain.CUBE_MINUS_SLIT
    assert c.slit.kind is SlitKind.SIGMA1
    assert c.neumann == ()
    assert c.classification is Classification.D_PARALLEL_C


def test_possi2_and_neumann_edge_entries():
    c = build_constellation("halfcube_sym_possi2")
    assert c.domain is Domain.HALFCUBE_MINUS
    m = mesh("halfcube_sym_possi2", 4)
    cen = m.facet_centroids()[m.facet_label == LABEL_M]
    # M_- = {0} x ]0,1[ x ]-1,0[
    assert np.all(cen[:, 0] == 0) and np.all(cen[:, 1] > 0) and np.all(cen[:, 2] < 0)
    assert len(cen) == 2 * 2 * 2  # (n/2)^2 squares, two triangles each

    m7 = mesh("neumann_edge_M7", 4)
    cen = m7.facet_centroids()[m7.facet_label == LABEL_M]
    assert np.all(m7.facet_coords()[m7.facet_label == LABEL_M][:, :, 2] == 0)
    assert np.all(cen[:, 0] < 0) and np.all(cen[:, 1] > 0)


def test_symmetric_slit_constellations_are_four():
    cs = symmetric_slit_constellations()
    assert len(cs) == 4
    assert all(c.symmetric and c.slit is not None for c in cs)


@pytest.mark.parametrize("name", catalog_names())
def test_dirichlet_set_nonempty(name):
    m = mesh(name, 4)
    assert np.any(m.facet_label == LABEL_E)


# ---------------------------------------------------------------- slits

def test_slit_membership():
    s1 = SlitSurface(SlitKind.SIGMA1)
    assert s1.contains(-0.5, 0.3) and s1.contains(0.0, 0.9)
    assert not s1.contains(0.1, 0.0)
    s2 = SlitSurface(SlitKind.SIGMA2)
    assert s2.contains(-0.5, 0.4) and not s2.contains(-0.5, 0.6)
    s3 = SlitSurface(SlitKind.SIGMA3)
    assert s3.contains(-0.5, 0.6) and not s3.contains(-0.5, 0.4)
    assert s3.contains(0.5, 0.0)


def test_sigma1_tip_is_shared_and_interior_is_doubled():
    m = mesh("cube_minus_sigma1", 4)
    p, q = m.crack_pairs[:, 0], m.crack_pairs[:, 1]
    pts = m.vertices[p]
    assert np.all(pts[:, 0] == 0)
    assert np.all(pts[:, 1] < 0) and np.all(pts[:, 1] > -1) and np.all(np.abs(pts[:, 2]) < 1)
    # n = 4: interior slit grid points y in {-0.5}, z in {-0.5, 0, 0.5}
    assert len(p) == 3
    tip = (m.vertices[:, 0] == 0) & (m.vertices[:, 1] == 0)
    assert np.sum(tip) == 5  # z in {-1, -0.5, 0, 0.5, 1}, once each


# ---------------------------------------------------------------- meshes

def test_two_cell_cube_counts():
    m = mesh("cube_minus_sigma1", 2)
    assert m.n_tets == 48
    assert m.total_volume() == pytest.approx(8.0, rel=1e-12)
    # n = 2 has no slit vertex strictly inside Σ1, so no duplicates
    assert len(m.crack_pairs) == 0


@pytest.mark.parametrize("name", catalog_names())
@pytest.mark.parametrize("n", [2, 4])
def test_volume_exact_and_positive(name, n):
    c = build_constellation(name)
    try:
        m = mesh(name, n)
    except RefinementError:
        assert n == 2
        return
    vol = signed_volumes(m.vertices, m.tets)
    assert np.all(vol > 0)
    assert m.total_volume() == pytest.approx(domain_volume(c.domain), rel=1e-12)


def test_halfcube_volume():
    assert mesh("halfcube_minus_sigma1", 4).total_volume() == pytest.approx(4.0, rel=1e-12)


@pytest.mark.parametrize("name", SYMMETRIC)
def test_symmetry_map_is_involutive_mesh_automorphism(name):
    m = mesh(name, 4)
    s = m.symmetry_map
    assert s is not None
    assert np.array_equal(s[s], np.arange(m.n_vertices))
    assert np.array_equal(m.vertices[s], m.vertices * [-1.0, 1.0, 1.0])
    assert check_symmetry(m)
    img = tet_image_index(m)
    assert np.array_equal(img[img], np.arange(m.n_tets))


@pytest.mark.parametrize("name", ["cube_minus_sigma1", "cube_minus_sigma2",
                                  "cube_minus_sigma3", "halfcube_minus_sigma1_halftop"])
def test_crack_consistency(name):
    m = mesh(name, 8)
    p, q = m.crack_pairs.T
    assert np.array_equal(m.vertices[p], m.vertices[q])
    for a, b in ((p, q),):
        has_a = np.isin(m.tets, a).any(axis=1)
        has_b = np.isin(m.tets, b).any(axis=1)
        # tets on the x > 0 side use the + copy, the others the - copy
        assert not np.any(has_a & has_b)
        assert np.all(m.centroids()[has_a][:, 0] > 0)
        assert np.all(m.centroids()[has_b][:, 0] < 0)
    assert np.all(m.vertex_side[p] == 1) and np.all(m.vertex_side[q] == -1)


@pytest.mark.parametrize("name", catalog_names())
def test_labels_partition_boundary(name):
    m = mesh(name, 4)
    assert np.all((m.facet_label == LABEL_E) | (m.facet_label == LABEL_M))
    assert np.sum(m.facet_label == LABEL_E) + np.sum(m.facet_label == LABEL_M) == len(m.facets)


def test_boundary_facet_count_of_plain_cube():
    # 6 faces x n^2 squares x 2 triangles
    assert len(mesh("cube", 4).facets) == 6 * 16 * 2


def test_slit_facets_are_dirichlet_both_sides():
    m = mesh("cube_minus_sigma1", 4)
    plus = m.facet_kind == SLIT_PLUS
    minus = m.facet_kind == SLIT_MINUS
    # Σ1 at n = 4: 2 x 4 squares on each side
    assert plus.sum() == minus.sum() == 16
    assert np.all(m.facet_label[plus | minus] == LABEL_E)
    assert not np.any(m.facet_label == LABEL_M)


def test_halftop_neumann_facets():
    m = mesh("halfcube_minus_sigma1_halftop", 8)
    fm = m.facet_label == LABEL_M
    assert fm.any()
    assert np.all(m.facet_coords()[fm][:, :, 2] == 0)
    assert np.all(m.facet_centroids()[fm][:, 1] > 0)
    # the whole strip ]-1,1[ x ]0,1[ x {0}: area 2
    area = 0.5 * np.linalg.norm(np.cross(*(m.facet_coords()[fm][:, 1:] -
                                           m.facet_coords()[fm][:, :1]).transpose(1, 0, 2)), axis=1)
    assert area.sum() == pytest.approx(2.0, rel=1e-12)


def test_classification_is_idempotent():
    c = build_constellation("halfcube_minus_sigma1_top")
    m = classify_boundary(generate_mesh(c, 4), c)
    again = classify_boundary(m, c)
    assert np.array_equal(m.facet_label, again.facet_label)


def test_unclassified_mesh_has_unset_labels():
    m = generate_mesh(build_constellation("cube"), 2)
    assert np.all(m.facet_label == UNSET)


def test_odd_or_small_n_rejected():
    c = build_constellation("cube")
    for n in (3, 0, 1, 5):
        with pytest.raises(ParameterError):
            generate_mesh(c, n)


class _OffGridSlit(SlitSurface):
    """Half-plane slit whose edge y = -0.3 does not lie on grid lines of spacing 0.5."""

    def contains(self, y, z):
        return (np.asarray(y) <= -0.3) & (np.abs(np.asarray(z)) <= 1)

    def splits(self, y, z):
        return self.contains(y, z) & (np.asarray(y) > -1) & (np.abs(np.asarray(z)) < 1)


def test_unresolved_slit_is_refinement_error():
    c = Constellation("offgrid", Domain.CUBE_MINUS_SLIT, _OffGridSlit(SlitKind.SIGMA1), (),
                      Classification.D_PARALLEL_C)
    with pytest.raises(RefinementError):
        generate_mesh(c, 4)


def test_triangle_slit_resolved_on_coarsest_mesh():
    m = generate_mesh(build_constellation("cube_minus_sigma2"), 2)
    assert np.any(m.facet_kind == SLIT_PLUS)


def test_classification_error_for_foreign_facet():
    c = build_constellation("halfcube_minus_sigma1")
    m = generate_mesh(build_constellation("cube"), 2)  # full cube facets above z = 0
    with pytest.raises(ClassificationError):
        classify_boundary(m, c)


# ---------------------------------------------------------------- components

def test_plane_cut_gives_two_components():
    m = mesh("cube_minus_plane", 4)
    comps = split_components(m, np.ones(m.n_tets, bool))
    assert len(comps) == 2
    assert sorted(c.volume() for c in comps) == pytest.approx([4.0, 4.0])


def test_sigma1_cube_is_connected():
    m = mesh("cube_minus_sigma1", 4)
    assert len(split_components(m, np.ones(m.n_tets, bool))) == 1


def test_half_selector_on_halfcube():
    m = mesh("halfcube_minus_sigma1", 4)
    comps = split_components(m, lambda cen: cen[:, 0] > 0)
    assert len(comps) == 1
    assert comps[0].volume() == pytest.approx(2.0, rel=1e-12)
    assert np.array_equal(comps[0].mesh.vertices, m.vertices[comps[0].vertex_map])


def test_empty_selection():
    m = mesh("cube", 2)
    assert split_components(m, np.zeros(m.n_tets, bool)) == []


def test_interface_facets_are_dirichlet():
    from buriedfem.geometry import INTERFACE
    m = mesh("cube", 4)
    comp = split_components(m, lambda cen: cen[:, 0] < 0)[0]
    iface = comp.mesh.facet_kind == INTERFACE
    assert iface.sum() == 16 * 2
    assert np.all(comp.mesh.facet_label[iface] == LABEL_E)
    assert np.all(comp.mesh.facet_coords()[iface][:, :, 0] == 0)


# ---------------------------------------------------------------- two-sets

def _square_surface():
    s = np.array([[0, -1, -1], [0, 1, -1], [0, 1, 1], [0, -1, 1]], float)
    return [s[[0, 1, 2]], s[[0, 2, 3]]]


def test_two_set_plane_square():
    rep = check_two_set(_square_surface(), [[0, 0.1, 0.05]], [0.05, 0.1, 0.2])
    assert rep.c_lower == pytest.approx(math.pi, rel=1e-2)
    assert rep.c_upper == pytest.approx(math.pi, rel=1e-2)


def test_two_set_half_plane_edge():
    s = np.array([[0, -1, -1], [0, 0, -1], [0, 0, 1], [0, -1, 1]], float)
    rep = check_two_set([s[[0, 1, 2]], s[[0, 2, 3]]], [[0, 0, 0.2]], [0.1, 0.3])
    assert rep.c_lower == pytest.approx(sector_area(math.pi, 1.0), rel=1e-2)


def test_two_set_triangle_vertex():
    tri = SlitSurface(SlitKind.SIGMA2).vertices
    opening = angle_between(tri[1] - tri[0], tri[2] - tri[0])
    rep = check_two_set([tri], [tri[0]], [0.1])
    assert rep.c_lower == pytest.approx(sector_area(opening, 1.0), rel=1e-2)
    assert rep.c_lower == pytest.approx(math.pi / 4, rel=1e-2)


def test_two_set_rejects_off_surface_point():
    with pytest.raises(InputError):
        check_two_set(_square_surface(), [[0.5, 0, 0]], [0.1])
    with pytest.raises(InputError):
        check_two_set(_square_surface(), [[0, 0, 0]], [1.5])


@given(y=st.floats(-0.6, 0.6), z=st.floats(-0.6, 0.6), r=st.floats(0.01, 0.35))
def test_two_set_bounds_property(y, z, r):
    rep = check_two_set(_square_surface(), [[0.0, y, z]], [r])
    assert 0 < rep.c_lower <= rep.c_upper
    assert rep.c_lower == pytest.approx(math.pi, rel=1e-9)


@given(st.sampled_from(SYMMETRIC), st.sampled_from([2, 4, 6]))
def test_symmetry_property(name, n):
    try:
        m = mesh(name, n)
    except RefinementError:
        return
    s = m.symmetry_map
    assert np.array_equal(s[s], np.arange(m.n_vertices))
    assert np.array_equal(m.vertices[s], m.vertices * [-1.0, 1.0, 1.0])


def test_patch_mirror():
    p = Patch(2, 0.0, ((0.0, 1.0), (0.0, 1.0)))
    assert p.mirrored().bounds[0] == (-1.0, -0.0)
