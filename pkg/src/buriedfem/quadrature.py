"""Conical-product (Stroud) quadrature on the reference tetrahedron."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def tet_rule(n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """``n**3`` points, exact for polynomials of degree ``2n - 1`` on the reference tet.

    Returns barycentric coordinates ``(Q, 4)`` and weights summing to 1 (fractions of the
    tet volume).
    """
    # Gauss-Jacobi nodes on [0, 1] for weights (1-t)^2, (1-t)^1, (1-t)^0
    pts, wts = [], []
    for alpha in (2, 1, 0):
        x, w = roots_jacobi(n, alpha, 0)
        pts.append((x + 1) / 2)
        wts.append(w / 2 ** (alpha + 1))
    a, b, c = np.meshgrid(*pts, indexing="ij")
    wa, wb, wc = np.meshgrid(*wts, indexing="ij")
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    # collapsed coordinates -> cartesian on {x, y, z >= 0, x + y + z <= 1}
    x = a
    y = b * (1 - a)
    z = c * (1 - a) * (1 - b)
    w = (wa * wb * wc).ravel()
    w = w / w.sum()
    bary = np.stack([1 - x - y - z, x, y, z], axis=1)
    return bary, w


def quadrature_points(vertices: np.ndarray, tets: np.ndarray, n: int = 3):
    """Physical points ``(T, Q, 3)`` and barycentric table for every tet."""
    bary, w = tet_rule(n)
    p = vertices[tets]  # (T, 4, 3)
    return np.einsum("qa,tai->tqi", bary, p), bary, w
