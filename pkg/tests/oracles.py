"""Independent reference computations used by the tests.

Nothing here imports the package: every value is obtained from first principles (explicit
loops, closed-form integrals, dense linear algebra) so that agreement with the library is
a genuine cross-check.
"""

import math

import numpy as np


# ---------------------------------------------------------------- P1 elements

def barycentric_gradients(p):
    """Gradients of the four hat functions of the tet with corners ``p`` (4, 3).

    Solves ``[1 x y z] c = e_i`` for each basis function by a dense inverse.
    """
    m = np.hstack([np.ones((4, 1)), np.asarray(p, float)])
    return np.linalg.inv(m)[1:].T  # row i = grad phi_i


def tet_volume(p):
    p = np.asarray(p, float)
    return abs(np.linalg.det(p[1:] - p[0])) / 6.0


def dense_stiffness(vertices, tets, rho_per_tet):
    """Global P1 stiffness matrix assembled tet by tet with explicit loops."""
    n = len(vertices)
    a = np.zeros((n, n))
    for t, tet in enumerate(tets):
        p = vertices[tet]
        g = barycentric_gradients(p)
        k = tet_volume(p) * g @ rho_per_tet[t] @ g.T
        for i in range(4):
            for j in range(4):
                a[tet[i], tet[j]] += k[i, j]
    return a


def reference_tet_laplacian():
    """Element matrix of the unit corner tet for rho = Id, computed by hand.

    Hat gradients are (-1,-1,-1), e1, e2, e3 and the volume is 1/6.
    """
    return np.array([[3, -1, -1, -1],
                     [-1, 1, 0, 0],
                     [-1, 0, 1, 0],
                     [-1, 0, 0, 1]], float) / 6.0


def dense_load_constant(vertices, tets, f0):
    b = np.zeros(len(vertices))
    for tet in tets:
        v = tet_volume(vertices[tet])
        for i in tet:
            b[i] += f0 * v / 4.0
    return b


def monomial_tet_integral(a, b, c):
    """``∫ x^a y^b z^c`` over the unit corner tet: ``a! b! c! / (a + b + c + 3)!``."""
    f = math.factorial
    return f(a) * f(b) * f(c) / f(a + b + c + 3)


# ---------------------------------------------------------------- singular model functions

def model_shell_energy(lam, r_in, r_out, length, angle):
    """``∫ |∇(r^λ sin(λθ))|^2`` over a cylindrical shell sector.

    ``|∇u|^2 = λ^2 r^{2λ-2}`` for every θ, so the integral is
    ``length * angle * λ^2 ∫ r^{2λ-1} dr = length * angle * λ/2 * (r_out^{2λ} - r_in^{2λ})``.
    """
    return length * angle * lam / 2.0 * (r_out ** (2 * lam) - r_in ** (2 * lam))


def slit_angle(x, y, side):
    """Angle in ``[0, 2π]`` around the z-axis measured from the ``x > 0`` face of the slit
    ``{x = 0, y <= 0}``; points on the slit use ``side`` (+1 or -1) to pick the face."""
    phi = np.arctan2(x, -y)  # 0 along -y, positive towards +x
    theta = np.where(phi >= 0, phi, phi + 2 * np.pi)
    on_slit = (x == 0) & (y < 0)
    theta = np.where(on_slit & (side < 0), 2 * np.pi, theta)
    theta = np.where(on_slit & (side >= 0), 0.0, theta)
    return theta


def power_integral(s, eps):
    """``∫_eps^1 r^s dr`` in closed form."""
    if s == -1:
        return -math.log(eps)
    return (1.0 - eps ** (s + 1)) / (s + 1)


# ---------------------------------------------------------------- matrices

def random_spd(rng, cond):
    """Random SPD 3x3 matrix with prescribed condition number."""
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    ev = np.array([1.0, math.sqrt(cond) ** rng.uniform(0, 2), cond])
    return q @ np.diag(ev) @ q.T


def svd_bounds(m):
    s = np.linalg.svd(np.asarray(m, float), compute_uv=False)
    return float(s.min()), float(s.max())


# ---------------------------------------------------------------- areas

def sector_area(angle, r):
    return angle * r * r / 2.0


def angle_between(u, v):
    u, v = np.asarray(u, float), np.asarray(v, float)
    return math.acos(float(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v)))
