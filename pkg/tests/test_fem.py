import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from buriedfem.coefficients import CoefficientField, mirror_extend
from buriedfem.errors import CoercivityError, InputError, MeshError
from buriedfem.fem import (
    DofMap, RhsFunctional, apply_bc, assemble, dual_norm, element_geometry, energy, h1_error,
    localize, norm_lp, norm_w1p, residual, seminorm_w1p, solve, tet_gradients)
from buriedfem.geometry import LABEL_M
from buriedfem.quadrature import tet_rule
from buriedfem.regularity import convergence_study
from buriedfem.symmetry import reflect

from helpers import mesh
from oracles import (dense_load_constant, dense_stiffness, monomial_tet_integral,
                     reference_tet_laplacian)

MU = np.array([[1.5, 0.2, 0.1], [0.2, 1.0, 0.15], [0.1, 0.15, 1.2]])
PI = math.pi


def anisotropic(m):
    return CoefficientField({r: MU * (1 + 0.25 * k) for k, r in enumerate(m.present_regions())})


# ---------------------------------------------------------------- assembly

def test_reference_tet_element_matrix():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    vol, g = element_geometry(v, np.array([[0, 1, 2, 3]]))
    k = vol[0] * g[0] @ g[0].T
    assert np.allclose(k, reference_tet_laplacian(), atol=1e-15)


@pytest.mark.parametrize("name", ["cube", "cube_minus_sigma1", "halfcube_minus_sigma1_halftop"])
def test_assembly_matches_dense_oracle(name):
    m = mesh(name, 4)
    rho = anisotropic(m)
    a = assemble(m, rho).matrix.toarray()
    ref = dense_stiffness(m.vertices, m.tets, rho.per_tet(m))
    assert np.max(np.abs(a - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_assembly_symmetric_and_constant_kernel():
    m = mesh("cube_minus_sigma1", 8)
    a = assemble(m, anisotropic(m)).matrix
    assert abs(a - a.T).max() <= 1e-14 * abs(a).max()
    assert np.max(np.abs(a @ np.ones(m.n_vertices))) <= 1e-13


def test_assembly_linear_in_rho():
    m = mesh("cube", 4)
    rho = anisotropic(m)
    a1 = assemble(m, rho).matrix
    a2 = assemble(m, rho.scaled(2.0)).matrix
    assert abs(a2 - 2 * a1).max() == 0.0


def test_assembly_independent_of_tet_order():
    m = mesh("cube_minus_sigma1", 4)
    perm = np.random.default_rng(0).permutation(m.n_tets)
    shuffled = dataclasses.replace(m, tets=m.tets[perm][:, [1, 0, 3, 2]], regions=m.regions[perm])
    a = assemble(m, anisotropic(m)).matrix
    b = assemble(shuffled, anisotropic(m)).matrix
    assert (a != b).nnz == 0


# ---------------------------------------------------------------- boundary conditions

def test_full_dirichlet_leaves_interior():
    n = 4
    red = apply_bc(assemble(mesh("cube", n), CoefficientField.identity(mesh("cube", n))))
    assert red.dofmap.n_free == (n - 1) ** 3


def test_top_neumann_dof_census():
    n = 4
    free = {}
    for name in ("halfcube_minus_sigma1", "halfcube_minus_sigma1_top"):
        m = mesh(name, n)
        free[name] = DofMap.from_mesh(m).n_free
    # top-face vertices off the closure of E: interior (n-1)^2 grid points minus those on
    # the slit trace {x = 0, -1 < y <= 0}
    expected = (n - 1) ** 2 - n // 2
    assert free["halfcube_minus_sigma1_top"] - free["halfcube_minus_sigma1"] == expected


def test_empty_dirichlet_set_is_not_coercive():
    m = mesh("cube", 2)
    neumann = m.with_labels(np.full(len(m.facets), LABEL_M, np.int8))
    with pytest.raises(CoercivityError):
        solve(assemble(neumann, CoefficientField.identity(m)), RhsFunctional(density=1.0))


def test_dofmap_size_mismatch():
    m = mesh("cube", 2)
    with pytest.raises(MeshError):
        apply_bc(assemble(m, CoefficientField.identity(m)), DofMap.from_mesh(mesh("cube", 4)))


# ---------------------------------------------------------------- loads

def test_constant_load_matches_oracle():
    m = mesh("cube_minus_sigma1", 4)
    b = RhsFunctional(density=2.5).load_vector(m)
    assert np.allclose(b, dense_load_constant(m.vertices, m.tets, 2.5), rtol=1e-13)
    assert math.fsum(b) == pytest.approx(2.5 * 8.0, rel=1e-13)


def test_flux_load_is_divergence_pairing():
    # ∫ F·∇v for constant F sums to zero over a partition of unity
    m = mesh("cube", 4)
    b = RhsFunctional(flux=np.array([0.3, -1.0, 2.0])).load_vector(m)
    assert abs(b.sum()) <= 1e-13


@pytest.mark.parametrize("a,b,c", [(0, 0, 0), (1, 0, 0), (2, 1, 0), (1, 1, 1), (3, 0, 2)])
def test_quadrature_exact_on_monomials(a, b, c):
    bary, w = tet_rule(3)  # exact up to degree 5
    x, y, z = bary[:, 1], bary[:, 2], bary[:, 3]
    assert (w @ (x ** a * y ** b * z ** c)) / 6.0 == pytest.approx(monomial_tet_integral(a, b, c), rel=1e-13)


def test_nodal_and_callable_density_agree_on_linear_data():
    m = mesh("cube", 4)
    f = lambda p: 1.0 + p[:, 0] - 2 * p[:, 2]
    b1 = RhsFunctional(density=f(m.vertices)).load_vector(m)
    b2 = RhsFunctional(density=f).load_vector(m)
    assert np.allclose(b1, b2, atol=1e-14)


# ---------------------------------------------------------------- solve

def test_tolerance_range():
    m = mesh("cube", 2)
    sys = assemble(m, CoefficientField.identity(m))
    for tol in (1e-15, 1e-5):
        with pytest.raises(InputError):
            solve(sys, RhsFunctional(density=1.0), tol)


def test_zero_rhs():
    m = mesh("cube_minus_sigma1", 4)
    sol = solve(assemble(m, CoefficientField.identity(m)), RhsFunctional(density=0.0))
    assert np.all(sol.u == 0)


def _sin_exact(p):
    return np.prod(np.sin(PI * p), axis=1)


def _sin_grad(p):
    s, c = np.sin(PI * p), np.cos(PI * p)
    return PI * np.stack([c[:, 0] * s[:, 1] * s[:, 2], s[:, 0] * c[:, 1] * s[:, 2],
                          s[:, 0] * s[:, 1] * c[:, 2]], axis=1)


def test_manufactured_rate():
    f = RhsFunctional(density=lambda p: 3 * PI ** 2 * _sin_exact(p))
    table = convergence_study("cube", f=f, ns=(4, 8, 16), grad_exact=_sin_grad)
    assert table.kind == "manufactured"
    assert np.all(np.diff(table.errors) < 0)
    assert table.rates[-1] == pytest.approx(1.0, abs=0.1)


def test_symmetric_rhs_gives_symmetric_solution():
    m = mesh("cube_minus_sigma1", 8)
    rho = mirror_extend(MU, m)
    sol = solve(assemble(m, rho), RhsFunctional(density=lambda p: 1 + p[:, 0] ** 2 + p[:, 1]), 1e-12)
    u = sol.u
    assert np.max(np.abs(reflect(m, u) - u)) <= 1e-9 * np.max(np.abs(u))


def test_galerkin_orthogonality_and_max_principle():
    m = mesh("halfcube_minus_sigma1_halftop", 8)
    rho = CoefficientField.identity(m)
    red = apply_bc(assemble(m, rho))
    f = RhsFunctional(density=1.0)
    tol = 1e-10
    sol = solve(red, f, tol)
    b = f.load_vector(m)[red.dofmap.index]
    r = red.matrix @ sol.u[red.dofmap.index] - b
    assert np.max(np.abs(r)) <= tol * np.linalg.norm(b)
    assert residual(sol.u, red, f) <= tol
    assert sol.u.min() >= -1e-10
    assert sol.iterations > 0 and sol.residuals[-1] <= tol


def test_residual_semantics():
    m = mesh("cube", 4)
    red = apply_bc(assemble(m, CoefficientField.identity(m)))
    f = RhsFunctional(density=1.0)
    assert residual(np.zeros(m.n_vertices), red, f) == 1.0
    u = solve(red, f, 1e-12).u
    rng = np.random.default_rng(0)
    d = rng.standard_normal(m.n_vertices)
    vals = [residual(u + s * d, red, f) for s in (1e-6, 1e-4, 1e-2, 1.0)]
    assert np.all(np.diff(vals) > 0)


def test_dual_norm_matches_dense():
    m = mesh("cube_minus_sigma1", 4)
    red = apply_bc(assemble(m, anisotropic(m)))
    r = np.random.default_rng(1).standard_normal(red.dofmap.n_free)
    ref = math.sqrt(r @ np.linalg.solve(red.matrix.toarray(), r))
    assert dual_norm(red, r) == pytest.approx(ref, rel=1e-9)
    assert dual_norm(red, 0 * r) == 0.0


# ---------------------------------------------------------------- localization

def test_localize_trivial_cutoffs():
    m = mesh("cube_minus_sigma1", 4)
    rho = anisotropic(m)
    f = RhsFunctional(density=lambda p: 1 + p[:, 1])
    u = np.random.default_rng(0).standard_normal(m.n_vertices)
    one = localize(m, u, np.ones(m.n_vertices), rho, f)
    assert np.allclose(one.load, f.load_vector(m), atol=1e-15)
    zero = localize(m, u, np.zeros(m.n_vertices), rho, f)
    assert np.all(zero.load == 0)


def test_localize_linear_case_by_hand():
    """u = x, η = (x+1)/2, ρ = Id, f = 0: ηu = x(x+1)/2 has -Δ(ηu) = -1, so for interior
    vertices <f_loc, φ_i> = -∫ φ_i."""
    m = mesh("cube", 4)
    x = m.vertices[:, 0]
    b = localize(m, x, (x + 1) / 2, CoefficientField.identity(m), RhsFunctional()).load
    interior = ~m.dirichlet_vertices()
    assert np.allclose(b[interior], -dense_load_constant(m.vertices, m.tets, 1.0)[interior],
                       atol=1e-15)


def test_localize_exact_for_p1_equation():
    """Elementwise quadrature oracle for ∫ u ρ∇η·∇v - ∫ v ρ∇u·∇η with random P1 u, η."""
    m = mesh("cube", 2)
    rho = anisotropic(m)
    rng = np.random.default_rng(5)
    u, eta = rng.standard_normal(m.n_vertices), rng.uniform(0, 1, m.n_vertices)
    b = localize(m, u, eta, rho, RhsFunctional()).load
    bary, w = tet_rule(3)
    ref = np.zeros(m.n_vertices)
    for t, tet in enumerate(m.tets):
        p = m.vertices[tet]
        hat = np.linalg.inv(np.hstack([np.ones((4, 1)), p]))[1:].T
        vol = abs(np.linalg.det(p[1:] - p[0])) / 6
        r = rho.per_tet(m)[t]
        ge, gu = eta[tet] @ hat, u[tet] @ hat
        uq = bary @ u[tet]
        for i in range(4):
            phi = bary[:, i]
            ref[tet[i]] += vol * (w @ uq * ((r @ ge) @ hat[i]) - w @ phi * (gu @ r @ ge))
    assert np.allclose(b, ref, atol=1e-14)


def test_localize_rejects_bad_cutoff():
    m = mesh("cube", 2)
    rho = CoefficientField.identity(m)
    with pytest.raises(InputError):
        localize(m, np.zeros(m.n_vertices), np.full(m.n_vertices, 1.5), rho, RhsFunctional())
    with pytest.raises(InputError):
        localize(m, np.zeros(m.n_vertices), np.zeros(3), rho, RhsFunctional())


# ---------------------------------------------------------------- norms

def test_norms_of_simple_fields():
    m = mesh("cube", 4)
    one = np.ones(m.n_vertices)
    assert norm_lp(m, one, 2.0) == pytest.approx(math.sqrt(8.0), rel=1e-13)
    assert seminorm_w1p(m, one) == 0.0
    x = m.vertices[:, 0]
    assert seminorm_w1p(m, x, 4.0) == pytest.approx(8.0 ** 0.25, rel=1e-13)
    # ∫ x^2 over [-1,1]^3 = 8/3
    assert norm_lp(m, x, 2.0) == pytest.approx(math.sqrt(8 / 3), rel=1e-13)
    assert norm_w1p(m, x) == pytest.approx(math.sqrt(8 / 3 + 8), rel=1e-13)


def test_h1_error_of_interpolant_of_linear_function():
    m = mesh("cube", 4)
    u = 2 * m.vertices[:, 1] - m.vertices[:, 2]
    assert h1_error(m, u, lambda p: np.tile([0.0, 2.0, -1.0], (len(p), 1))) <= 1e-13


@given(st.integers(0, 2 ** 31))
def test_energy_matches_gradient_integral(seed):
    m = mesh("cube_minus_sigma1", 2)
    rho = anisotropic(m)
    u = np.random.default_rng(seed).standard_normal(m.n_vertices)
    g = tet_gradients(m, u)
    direct = math.fsum(m.volumes() * np.einsum("ti,tij,tj->t", g, rho.per_tet(m), g))
    assert energy(assemble(m, rho), u) == pytest.approx(direct, rel=1e-12)


@given(st.integers(0, 2 ** 31), st.floats(0.1, 10.0))
def test_solution_scales_linearly(seed, s):
    m = mesh("cube", 4)
    rho = CoefficientField.identity(m)
    d = np.random.default_rng(seed).uniform(-1, 1, m.n_tets)
    u1 = solve(assemble(m, rho), RhsFunctional(density=d), 1e-13).u
    u2 = solve(assemble(m, rho), RhsFunctional(density=s * d), 1e-13).u
    assert np.allclose(u2, s * u1, atol=1e-10 * s * max(1e-300, np.abs(u1).max()))
