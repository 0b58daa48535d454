"""Area of a triangulated surface inside balls, for the r^2 two-sided area bound."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class TwoSetReport:
    c_lower: float
    c_upper: float
    samples: list = field(default_factory=list)  # (point, radius, area)

    def to_dict(self) -> dict:
        return {
            "c_lower": self.c_lower,
            "c_upper": self.c_upper,
            "samples": [[list(map(float, p)), float(r), float(a)] for p, r, a in self.samples],
        }


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _edge_area(a, b, R):
    """Signed area of the intersection of the triangle (0, a, b) with the disk |p| <= R."""
    d = b - a
    # points a + t d on the circle
    qa = d @ d
    if qa == 0.0:
        return 0.0
    qb = 2.0 * (a @ d)
    qc = a @ a - R * R
    ts = [0.0]
    disc = qb * qb - 4.0 * qa * qc
    if disc > 0.0:
        s = np.sqrt(disc)
        for t in sorted(((-qb - s) / (2 * qa), (-qb + s) / (2 * qa))):
            if 0.0 < t < 1.0:
                ts.append(t)
    ts.append(1.0)
    area = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        p, q = a + t0 * d, a + t1 * d
        mid = a + 0.5 * (t0 + t1) * d
        if mid @ mid <= R * R:
            area += 0.5 * _cross2(p, q)
        else:
            area += 0.5 * R * R * np.arctan2(_cross2(p, q), p @ q)
    return area


def polygon_disk_area(poly2d: np.ndarray, center, R: float) -> float:
    """Exact area of a simple planar polygon intersected with a disk."""
    pts = np.asarray(poly2d, float) - np.asarray(center, float)
    total = 0.0
    for k in range(len(pts)):
        total += _edge_area(pts[k], pts[(k + 1) % len(pts)], R)
    return abs(total)


def triangle_ball_area(tri: np.ndarray, x: np.ndarray, r: float) -> float:
    """Area of the triangle ``tri`` (3x3) inside the closed ball ``B(x, r)``."""
    tri = np.asarray(tri, float)
    u = tri[1] - tri[0]
    v = tri[2] - tri[0]
    nrm = np.cross(u, v)
    nn = np.linalg.norm(nrm)
    if nn == 0.0:
        return 0.0
    nrm = nrm / nn
    dist = (x - tri[0]) @ nrm
    if abs(dist) >= r:
        return 0.0
    R = np.sqrt(r * r - dist * dist)
    e1 = u / np.linalg.norm(u)
    e2 = np.cross(nrm, e1)
    basis = np.stack([e1, e2])
    poly = (tri - tri[0]) @ basis.T
    center = (x - tri[0]) @ basis.T
    return polygon_disk_area(poly, center, R)


def _point_triangle_distance(p, tri):
    # distance by projection plus clamping onto edges
    a, b, c = tri
    n = np.cross(b - a, c - a)
    nn = n @ n
    if nn > 0:
        q = p - ((p - a) @ n) / nn * n
        w0 = np.cross(b - a, q - a) @ n
        w1 = np.cross(c - b, q - b) @ n
        w2 = np.cross(a - c, q - c) @ n
        if (w0 >= 0 and w1 >= 0 and w2 >= 0) or (w0 <= 0 and w1 <= 0 and w2 <= 0):
            return float(np.linalg.norm(p - q))
    best = np.inf
    for s, e in ((a, b), (b, c), (c, a)):
        d = e - s
        t = np.clip((p - s) @ d / (d @ d), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (s + t * d))))
    return best


def check_two_set(surface, points, radii, tol: float = 1e-9) -> TwoSetReport:
    """Measure ``area(surface ∩ B(x, r)) / r^2`` over all sample points and radii.

    ``surface`` is a sequence of triangles (each 3x3).  Areas are computed exactly by
    clipping each triangle against the disk cut out of its plane by the ball.
    """
    tris = np.asarray(surface, float).reshape(-1, 3, 3)
    pts = np.atleast_2d(np.asarray(points, float))
    radii = [float(r) for r in radii]
    if not radii or any(not (0.0 < r <= 1.0) for r in radii):
        raise InputError(f"radii must lie in ]0, 1], got {radii}")
    samples = []
    for p in pts:
        d = min(_point_triangle_distance(p, t) for t in tris)
        if d > tol:
            raise InputError(f"point {p.tolist()} is {d:.3g} away from the surface")
        for r in radii:
            area = sum(triangle_ball_area(t, p, r) for t in tris)
            samples.append((p.copy(), r, area))
    ratios = np.array([a / r ** 2 for _, r, a in samples])
    return TwoSetReport(float(ratios.min()), float(ratios.max()), samples)
