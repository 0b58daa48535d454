"""Edge singular exponents from gradient shell energies, and mesh convergence rates.

Near an edge the solution behaves like ``r^λ Φ(θ)`` in the cross-section, so the energy in a
cylindrical shell ``a < r < b`` scales like ``b^{2λ} - a^{2λ}``.  The first correction of
such an expansion carries exponent ``λ + 1``; the default fit models both terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from .coefficients import CoefficientField
from .errors import DomainError, ParameterError, RefinementError, ResolutionError
from .fem import (RhsFunctional, apply_bc, assemble, element_geometry, h1_error, solve,
                  tet_gradients)
from .geometry.catalog import Constellation, build_constellation
from .geometry.mesh import TetMesh, build_mesh
from .io import dumps
from .quadrature import tet_rule

LAMBDA_RANGE = (0.05, 1.5)
SHELL_RATIO = 2.0 ** 0.25
MIN_RADIUS_FACTOR = 2.0  # innermost shell radius in units of h
FIT_SPAN = 4.0  # fitted radii cover [r_max / FIT_SPAN, r_max]
UNRELIABLE_RESIDUAL = 0.05

ABOVE_3 = "ABOVE_3"
BELOW_4 = "BELOW_4"
UNRELIABLE = "UNRELIABLE_FIT"


def dyadic_radii(r_max: float, r_min: float, ratio: float = SHELL_RATIO) -> np.ndarray:
    """Radii ``r_max * ratio^-k`` down to ``r_min`` (inclusive up to rounding), decreasing."""
    if not (0 < r_min < r_max) or ratio <= 1:
        raise ParameterError("need 0 < r_min < r_max and ratio > 1")
    k = int(math.floor(math.log(r_max / r_min) / math.log(ratio) + 1e-9))
    return r_max * ratio ** -np.arange(k + 1, dtype=float)


@dataclass(frozen=True)
class EdgeProbe:
    """Cylindrical shells around the line ``point + t*direction``, ``t`` in ``window``.

    With ``direction=None`` the shells are spherical around ``point`` (vertex probe).
    ``normal`` is the normal of the flat boundary plane through the edge, used for the
    quadratic particular solution; ``None`` disables the subtraction.
    """

    point: tuple
    direction: Optional[tuple]
    radii: tuple
    window: tuple = (-0.5, 0.5)
    normal: Optional[tuple] = None

    def __post_init__(self):
        r = np.asarray(self.radii, float)
        if r.ndim != 1 or len(r) < 2 or np.any(r <= 0) or np.any(np.diff(r) >= 0):
            raise ParameterError("probe radii must be positive and strictly decreasing")
        if self.direction is not None:
            d = np.asarray(self.direction, float)
            if not np.isclose(np.linalg.norm(d), 1.0):
                object.__setattr__(self, "direction", tuple(d / np.linalg.norm(d)))
            if self.window[1] <= self.window[0]:
                raise ParameterError("empty axial window")

    @property
    def n_shells(self) -> int:
        return len(self.radii) - 1

    def check_resolution(self, h: float, factor: float = MIN_RADIUS_FACTOR) -> None:
        if len(self.radii) < 4:
            raise ResolutionError(f"probe has {self.n_shells} shells, at least 3 are needed")
        if min(self.radii) < factor * h * (1 - 1e-12):
            raise ResolutionError(
                f"innermost radius {min(self.radii):g} below {factor:g} h = {factor * h:g}")

    def distances(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the probe line (or point) and inside-window mask."""
        rel = x - np.asarray(self.point, float)
        if self.direction is None:
            return np.linalg.norm(rel, axis=-1), np.ones(rel.shape[:-1], bool)
        d = np.asarray(self.direction, float)
        t = rel @ d
        perp = rel - t[..., None] * d
        return np.linalg.norm(perp, axis=-1), (t >= self.window[0]) & (t <= self.window[1])

    def to_dict(self) -> dict:
        return {"point": list(map(float, self.point)),
                "direction": None if self.direction is None else list(map(float, self.direction)),
                "radii": [float(r) for r in self.radii], "window": list(map(float, self.window)),
                "normal": None if self.normal is None else list(map(float, self.normal))}


def probe_for(c: Constellation, h: float, ratio: float = SHELL_RATIO,
              factor: float = MIN_RADIUS_FACTOR, span: float = FIT_SPAN) -> EdgeProbe:
    """The catalog probe of ``c``: radii from ``c.probe_radius`` down to ``probe_radius/span``.

    The fitted range is fixed in physical units, so refining the mesh only improves the shell
    data and the estimate converges.  The innermost radius must be at least ``factor * h``;
    closer to the edge the discrete gradient energy is visibly inflated.
    """
    r_max = c.probe_radius
    if factor * h > (r_max / span) * (1 + 1e-12):
        raise ResolutionError(
            f"mesh size {h:g} too coarse: innermost radius {r_max / span:g} needs h <= "
            f"{r_max / span / factor:g}")
    probe = EdgeProbe(c.probe_point, c.probe_direction,
                      tuple(dyadic_radii(r_max, r_max / span, ratio)), c.probe_window,
                      c.probe_normal)
    probe.check_resolution(h, factor)
    return probe


def vertex_probe(point, h: float, r_max: float = 0.5, ratio: float = SHELL_RATIO,
                 factor: float = MIN_RADIUS_FACTOR, span: float = FIT_SPAN) -> EdgeProbe:
    """Spherical shells around a tip vertex."""
    probe = EdgeProbe(tuple(point), None, tuple(dyadic_radii(r_max, r_max / span, ratio)))
    probe.check_resolution(h, factor)
    return probe


@dataclass(frozen=True)
class ShellMoments:
    radii: np.ndarray   # shell boundaries, decreasing (K + 1)
    values: np.ndarray  # ∫ over shell k (between radii[k+1] and radii[k]) of |∇u|^q
    q: float

    @property
    def inner(self) -> np.ndarray:
        return self.radii[1:]

    @property
    def outer(self) -> np.ndarray:
        return self.radii[:-1]

    def to_dict(self) -> dict:
        return {"radii": self.radii.tolist(), "values": self.values.tolist(), "q": self.q}


def particular_gradient(normal, point, scale: float) -> Callable:
    """Gradient of ``-scale * (n·(x - p))^2 / 2``."""
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    p = np.asarray(point, float)
    return lambda x: -scale * ((x - p) @ n)[..., None] * n


def shell_moments(mesh: TetMesh, u, probe: EdgeProbe, q: float = 2.0,
                  subtract: Optional[Callable] = None, order: int = 3, fine_order: int = 8,
                  chunk: int = 4000, metric: Optional[np.ndarray] = None) -> ShellMoments:
    """``∫_{shell_k} |∇u - g|^q`` for every shell, binned at quadrature points.

    ``g = subtract(x)`` is an optional smooth gradient field removed pointwise.  With per-tet
    SPD matrices ``metric`` the integrand is ``(v·metric·v)^{q/2}``, ``v = ∇u - g``.  Each tet
    contributes its constant gradient at ``order**3`` conical-product points; tets cut by a
    shell boundary or a window end use ``fine_order**3`` points, since the inner shells are
    thinner than one element.
    """
    u = np.asarray(u, float)
    radii = np.asarray(probe.radii, float)
    r_max, r_min = radii[0], radii[-1]
    cen = mesh.vertices[mesh.tets].mean(axis=1)
    dist, _ = probe.distances(cen)
    reach = dist <= r_max + 2.0 * mesh.h
    if probe.direction is not None:
        t = (cen - np.asarray(probe.point)) @ np.asarray(probe.direction)
        reach &= (t >= probe.window[0] - 2 * mesh.h) & (t <= probe.window[1] + 2 * mesh.h)
    idx = np.flatnonzero(reach)
    cut = _cut_tets(mesh, idx, probe)
    out = np.zeros(len(radii) - 1)
    for sel, o in ((idx[~cut], order), (idx[cut], fine_order)):
        bary, w = tet_rule(o)
        step = max(1, chunk * 27 // len(w))
        for s in range(0, len(sel), step):
            _accumulate(out, mesh, u, sel[s:s + step], probe, q, subtract, bary, w,
                        None if metric is None else metric[sel[s:s + step]])
    return ShellMoments(radii, out, float(q))


def _cut_tets(mesh: TetMesh, idx: np.ndarray, probe: EdgeProbe) -> np.ndarray:
    """Tets (of ``idx``) whose distance range may cross a shell radius or a window end.

    The distance to a line is convex and 1-Lipschitz: its maximum over a tet sits at a vertex,
    and the centroid value minus the vertex spread bounds it from below.
    """
    p = mesh.vertices[mesh.tets[idx]]
    dv, _ = probe.distances(p)
    dc, _ = probe.distances(p.mean(axis=1))
    spread = np.linalg.norm(p - p.mean(axis=1)[:, None], axis=-1).max(axis=1)
    lo, hi = np.maximum(dc - spread, 0.0), dv.max(axis=1)
    radii = np.asarray(probe.radii, float)
    cut = ((lo[:, None] < radii) & (hi[:, None] > radii)).any(axis=1)
    if probe.direction is not None:
        t = (p - np.asarray(probe.point)) @ np.asarray(probe.direction)
        for end in probe.window:
            cut |= (t.min(axis=1) < end) & (t.max(axis=1) > end)
    return cut


def _accumulate(out, mesh, u, sel, probe, q, subtract, bary, w, metric=None):
    radii = np.asarray(probe.radii, float)
    edges = radii[::-1]  # bins via the increasing reversed radii
    tets = mesh.tets[sel]
    vol, _ = element_geometry(mesh.vertices, tets)
    grad = _gradients_of(mesh, u, tets)
    pts = np.einsum("qa,tai->tqi", bary, mesh.vertices[tets])
    d, inside = probe.distances(pts)
    g = np.broadcast_to(grad[:, None, :], pts.shape)
    if subtract is not None:
        g = g - subtract(pts)
    if metric is None:
        dens = np.einsum("tqi,tqi->tq", g, g)
    else:
        dens = np.einsum("tqi,tij,tqj->tq", g, metric, g)
    val = dens ** (q / 2) * (vol[:, None] * w[None, :])
    keep = inside & (d >= radii[-1]) & (d < radii[0])
    k = np.searchsorted(edges, d[keep], side="right") - 1
    np.add.at(out, len(out) - 1 - k, val[keep])


def _gradients_of(mesh: TetMesh, u: np.ndarray, tets: np.ndarray) -> np.ndarray:
    _, g = element_geometry(mesh.vertices, tets)
    ut = u[tets]
    return np.einsum("ti,tik->tk", ut[:, 1:] - ut[:, :1], g[:, 1:])


@dataclass(frozen=True)
class ExponentFit:
    lam: float
    residual: float
    lam_plain: float
    plain_residual: float
    coefficients: tuple
    unreliable: bool
    method: str

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "fit_residual": self.residual, "lambda_plain": self.lam_plain,
                "plain_residual": self.plain_residual, "coefficients": list(self.coefficients),
                "unreliable": self.unreliable, "method": self.method}


def _shell_basis(outer, inner, e):
    return outer ** e - inner ** e


def fit_plain(m: ShellMoments) -> tuple[float, float]:
    """Least-squares slope of ``log S_k`` against ``log r_k`` (geometric mean radius); λ = slope/2."""
    s = m.values
    if np.any(s <= 0):
        return float("nan"), float("inf")
    x = np.log(np.sqrt(m.inner * m.outer))
    y = np.log(s)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    return float(coef[0] / 2), float(np.sqrt(np.mean(res ** 2)))


def _two_term_misfit(lam: float, m: ShellMoments):
    b = np.vstack([_shell_basis(m.outer, m.inner, 2 * lam),
                   _shell_basis(m.outer, m.inner, 2 * lam + 2)]).T / m.values[:, None]
    coef, _ = nnls(b, np.ones(len(m.values)))
    res = b @ coef - 1.0
    if coef[0] <= 0:
        # without a leading term the model is the one-term model at λ + 1
        return math.inf, coef
    return float(np.sqrt(np.mean(res ** 2))), coef


def fit_two_term(m: ShellMoments, bounds=LAMBDA_RANGE) -> tuple[float, float, np.ndarray]:
    """Fit ``S_k = a (r_k^{2λ} - r_{k+1}^{2λ}) + b (r_k^{2λ+2} - r_{k+1}^{2λ+2})``.

    The angular modes of an edge expansion are energy-orthogonal, so shell energies are sums
    of squares and ``a, b >= 0``.  ``a, b`` are eliminated by non-negative least squares in
    relative residuals; λ minimizes the remaining one-dimensional misfit (grid search, then
    bounded refinement).
    """
    grid = np.linspace(bounds[0], bounds[1], 291)
    vals = np.array([_two_term_misfit(l, m)[0] for l in grid])
    if not np.isfinite(vals).any():
        return float("nan"), math.inf, np.zeros(2)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    # infinite misfits (no leading term) are capped so the bracketing stays finite
    opt = minimize_scalar(lambda l: min(_two_term_misfit(l, m)[0], 1e10), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-8})
    lam = float(opt.x)
    res, coef = _two_term_misfit(lam, m)
    return lam, res, coef


def fit_exponent(m: ShellMoments, method: str = "two_term") -> ExponentFit:
    """λ from shell energies (``q = 2``); both fits are always reported.

    The fit is flagged unreliable (never raised) if the energies are not monotone in the
    radius and the misfit exceeds the threshold, if the leading amplitude is not positive,
    or if λ sits on the search boundary.
    """
    if m.q != 2:
        raise ParameterError("exponent fits need q = 2 moments")
    if len(m.values) < 3:
        raise ResolutionError("at least 3 shells are needed for a fit")
    lam_p, res_p = fit_plain(m)
    if np.all(m.values == 0):
        return ExponentFit(float("nan"), float("inf"), lam_p, res_p, (0.0, 0.0), True, method)
    if method == "plain":
        lam, res, coef = lam_p, res_p, np.array([float("nan"), 0.0])
    elif method == "two_term":
        lam, res, coef = fit_two_term(m)
    else:
        raise ParameterError(f"unknown fit method {method!r}")
    # per-unit-log-radius energies; a genuine power law makes them monotone
    dens = m.values / np.log(m.outer / m.inner)
    monotone = bool(np.all(np.diff(dens) <= 0) or np.all(np.diff(dens) >= 0))
    bad = (not monotone and res > UNRELIABLE_RESIDUAL) or not np.isfinite(lam)
    if method == "two_term":
        edge = min(abs(lam - LAMBDA_RANGE[0]), abs(lam - LAMBDA_RANGE[1])) < 1e-3
        bad = bad or coef[0] <= 0 or edge
    return ExponentFit(lam, res, lam_p, res_p, tuple(float(x) for x in coef), bool(bad), method)


def q_star(lam: float) -> float:
    """Supremum of ``q`` with ``r^{λ-1}`` in ``L^q`` of a 2D cross-section: ``2/(1-λ)``."""
    if not lam > 0:
        raise DomainError(f"exponent must be positive, got {lam}")
    return math.inf if lam >= 1 else 2.0 / (1.0 - lam)


def exponent_flags(lam: float, unreliable: bool = False) -> list[str]:
    flags = []
    if np.isfinite(lam) and lam > 0:
        q = q_star(lam)
        if q > 3:
            flags.append(ABOVE_3)
        if q < 4:
            flags.append(BELOW_4)
    if unreliable:
        flags.append(UNRELIABLE)
    return flags


@dataclass
class ExponentReport:
    constellation: str
    coefficient_hash: str
    n: int
    fit: ExponentFit
    moments: ShellMoments
    probe: EdgeProbe
    extra: dict = field(default_factory=dict)

    @property
    def lam(self) -> float:
        return self.fit.lam

    @property
    def q_star(self) -> float:
        return q_star(self.fit.lam) if self.fit.lam > 0 else float("nan")

    @property
    def flags(self) -> list[str]:
        return exponent_flags(self.fit.lam, self.fit.unreliable)

    def to_dict(self) -> dict:
        q = self.q_star
        d = {"constellation": self.constellation, "coefficient_hash": self.coefficient_hash,
             "n": self.n, "lambda": self.fit.lam, "q_star": q if math.isfinite(q) else "inf",
             "fit_residual": self.fit.residual, "flags": self.flags,
             "fit": self.fit.to_dict(), "shells": self.moments.to_dict(),
             "probe": self.probe.to_dict()}
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _constant_density(f: RhsFunctional) -> Optional[float]:
    d = f.density
    if f.load is None and f.flux is None and d is not None and not callable(d) and np.ndim(d) == 0:
        return float(d)
    return None


def _edge_coefficient(mesh: TetMesh, rho: CoefficientField, probe: EdgeProbe) -> np.ndarray:
    """Volume-weighted mean coefficient over the tets touching the innermost shell."""
    cen = mesh.centroids()
    d, inside = probe.distances(cen)
    near = inside & (d < probe.radii[-1] + mesh.h)
    if not near.any():
        near = d <= d.min() + mesh.h
    vol = mesh.volumes()[near]
    return np.einsum("t,tij->ij", vol, rho.per_tet(mesh)[near]) / vol.sum()


def exponent_from_solution(mesh: TetMesh, u, probe: EdgeProbe, rho: CoefficientField,
                           f: Optional[RhsFunctional] = None, method: str = "two_term",
                           subtract: bool = True) -> tuple[ExponentFit, ShellMoments]:
    """Fit λ of a computed solution; removes the quadratic particular solution if possible.

    Shells measure the energy density ``∇u·ρ∇u`` of the form (``|∇u|^2`` for ``ρ = Id``).
    """
    g = None
    f0 = _constant_density(f) if f is not None else None
    if subtract and probe.normal is not None and f0 is not None:
        n = np.asarray(probe.normal, float)
        n = n / np.linalg.norm(n)
        stiff = float(n @ _edge_coefficient(mesh, rho, probe) @ n)
        g = particular_gradient(n, probe.point, f0 / stiff)
    m = shell_moments(mesh, u, probe, 2.0, subtract=g, metric=rho.per_tet(mesh))
    return fit_exponent(m, method), m


def estimate_exponent(c, n: int, rho: Optional[CoefficientField] = None,
                      f: Optional[RhsFunctional] = None, tol: float = 1e-10,
                      method: str = "two_term", probe: Optional[EdgeProbe] = None,
                      mesh: Optional[TetMesh] = None) -> ExponentReport:
    """Solve on the catalog constellation ``c`` at resolution ``n`` and fit the probe exponent."""
    c = build_constellation(c) if isinstance(c, str) else c
    mesh = build_mesh(c, n) if mesh is None else mesh
    rho = CoefficientField.identity(mesh) if rho is None else rho
    f = RhsFunctional(density=1.0) if f is None else f
    probe = probe_for(c, mesh.h) if probe is None else probe
    red = apply_bc(assemble(mesh, rho))
    sol = solve(red, f.load_vector(mesh), tol)
    fit, m = exponent_from_solution(mesh, sol.u, probe, rho, f, method)
    return ExponentReport(c.name, rho.digest(), n, fit, m, probe,
                          {"iterations": sol.iterations, "h": mesh.h})


# ---------------------------------------------------------------- convergence

def parent_tets(coarse: TetMesh, fine: TetMesh) -> np.ndarray:
    """Index of the coarse tet containing each fine tet of a dyadically refined mesh.

    Every coarse tet is a union of fine tets, so a fine centroid locates its parent; the
    search is restricted to the coarse tets of the grid cell holding the centroid.
    """
    if not np.isclose(coarse.h, 2 * fine.h):
        raise RefinementError("fine mesh must halve the mesh size of the coarse one")
    cc = coarse.centroids()
    fc = fine.centroids()
    span = int(round(2.0 / coarse.h)) + 2

    def cell_key(x):
        ijk = np.floor((x + 1.0) / coarse.h + 1e-9).astype(np.int64)
        return (ijk[:, 0] * span + ijk[:, 1]) * span + ijk[:, 2]

    ck = cell_key(cc)
    order = np.argsort(ck, kind="stable")
    sorted_keys = ck[order]
    fk = cell_key(fc)
    first = np.searchsorted(sorted_keys, fk)
    last = np.searchsorted(sorted_keys, fk, side="right")
    parent = np.full(len(fc), -1)
    for j in range(int((last - first).max())):
        pos = np.minimum(first + j, len(order) - 1)
        cand = order[pos]
        valid = (first + j < last) & (parent < 0)
        p = coarse.vertices[coarse.tets[cand]]
        jac = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))
        lam = np.linalg.solve(jac, (fc - p[:, 0])[..., None])[..., 0]
        inside = valid & (lam.min(axis=1) > -1e-9) & (lam.sum(axis=1) < 1 + 1e-9)
        parent[inside] = cand[inside]
    if np.any(parent < 0):
        raise RefinementError("meshes are not nested")
    return parent


def level_difference(coarse: TetMesh, u_coarse, fine: TetMesh, u_fine,
                     rho: CoefficientField, mask: Optional[np.ndarray] = None) -> float:
    """Energy norm of ``u_fine - u_coarse`` over the fine tets selected by ``mask``."""
    par = parent_tets(coarse, fine)
    d = tet_gradients(fine, u_fine) - tet_gradients(coarse, u_coarse)[par]
    e = fine.volumes() * np.einsum("ti,tij,tj->t", d, rho.per_tet(fine), d)
    if mask is not None:
        e = e[mask]
    return math.sqrt(math.fsum(e.tolist()))


@dataclass(frozen=True)
class ConvergenceTable:
    ns: tuple
    h: tuple
    errors: tuple     # per level (manufactured) or per consecutive pair (differences)
    rates: tuple
    kind: str         # "manufactured", "successive" or "local"
    global_errors: tuple = ()
    global_rates: tuple = ()

    def to_dict(self) -> dict:
        return {"n": list(self.ns), "h": list(self.h), "errors": list(self.errors),
                "rates": list(self.rates), "kind": self.kind,
                "global_errors": list(self.global_errors), "global_rates": list(self.global_rates)}


def observed_rates(h: Sequence[float], e: Sequence[float]) -> list[float]:
    h, e = np.asarray(h, float), np.asarray(e, float)
    return [float(np.log(e[i] / e[i + 1]) / np.log(h[i] / h[i + 1])) for i in range(len(e) - 1)]


def convergence_study(c, rho: Optional[CoefficientField] = None,
                      f: Optional[RhsFunctional] = None, ns: Sequence[int] = (8, 16, 32),
                      grad_exact: Optional[Callable] = None, local_radius: Optional[float] = None,
                      tol: float = 1e-11) -> ConvergenceTable:
    """Energy-norm errors over uniform refinements.

    With ``grad_exact`` the error against the manufactured gradient is used.  Otherwise the
    difference of consecutive levels is measured on nested meshes (``n`` doubling); the
    global value equals ``sqrt(a(u_f, u_f) - a(u_c, u_c))`` by Galerkin orthogonality.  With
    ``local_radius`` the primary errors are restricted to the probe cylinder of that radius
    around the constellation's edge, where the singular part dominates the error.
    """
    c = build_constellation(c) if isinstance(c, str) else c
    ns = tuple(int(n) for n in ns)
    if len(ns) < 3:
        raise RefinementError("a convergence study needs at least 3 levels")
    if grad_exact is None and any(b != 2 * a for a, b in zip(ns, ns[1:])):
        raise RefinementError("successive differences need nested meshes (n doubling)")
    f = RhsFunctional(density=1.0) if f is None else f
    hs, errors, levels = [], [], []
    for n in ns:
        mesh = build_mesh(c, n)
        r = CoefficientField.identity(mesh) if rho is None else rho
        red = apply_bc(assemble(mesh, r))
        u = solve(red, f.load_vector(mesh), tol).u
        hs.append(mesh.h)
        if grad_exact is not None:
            errors.append(h1_error(mesh, u, grad_exact))
        else:
            levels.append((mesh, u, r))
    if grad_exact is not None:
        return ConvergenceTable(ns, tuple(hs), tuple(errors), tuple(observed_rates(hs, errors)),
                                "manufactured")
    glob, local = [], []
    for (mc, uc, _), (mf, uf, rf) in zip(levels, levels[1:]):
        glob.append(level_difference(mc, uc, mf, uf, rf))
        if local_radius is not None:
            probe = EdgeProbe(c.probe_point, c.probe_direction, (local_radius, 1e-12),
                              c.probe_window)
            dist, inside = probe.distances(mf.centroids())
            local.append(level_difference(mc, uc, mf, uf, rf, inside & (dist < local_radius)))
    g_rates = tuple(observed_rates(hs[:-1], glob))
    if local_radius is None:
        return ConvergenceTable(ns, tuple(hs), tuple(glob), g_rates, "successive",
                                tuple(glob), g_rates)
    return ConvergenceTable(ns, tuple(hs), tuple(local), tuple(observed_rates(hs[:-1], local)),
                            "local", tuple(glob), g_rates)
