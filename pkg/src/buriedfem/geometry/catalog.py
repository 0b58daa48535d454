"""Catalog of model constellations in the unit-cube frame.

Coordinates follow the frame of the cube ``C = ]-1,1[^3`` with ``Q = C ∩ {z < 0}``,
``C_- = C ∩ {x < 0}`` and ``Q_± = Q ∩ {±x > 0}``.  All slits lie in the plane ``x = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import CatalogError


class Domain(enum.Enum):
    CUBE_MINUS_SLIT = "cube_minus_slit"          # C (optionally minus a slit)
    HALFCUBE_MINUS_SLIT = "halfcube_minus_slit"  # Q (optionally minus a slit)
    HALFCUBE_PLUS = "halfcube_plus"              # Q_+
    HALFCUBE_MINUS = "halfcube_minus"            # Q_-
    CUBE_HALF_X = "cube_half_x"                  # C_-


class SlitKind(enum.Enum):
    SIGMA1 = "sigma1"
    SIGMA2 = "sigma2"
    SIGMA3 = "sigma3"
    PLANE = "plane"  # the full square C ∩ {x = 0}; disconnects the cube


class Classification(enum.Enum):
    D_PARALLEL_C = "D_PARALLEL_C"
    D_PARALLEL_D = "D_PARALLEL_D"
    R_C = "R_C"
    R_D = "R_D"
    MODEL_HALF = "MODEL_HALF"
    REFERENCE = "REFERENCE"


# (x range, z range) of each domain box in the cube frame; y always spans [-1, 1]
DOMAIN_BOX = {
    Domain.CUBE_MINUS_SLIT: ((-1.0, 1.0), (-1.0, 1.0)),
    Domain.HALFCUBE_MINUS_SLIT: ((-1.0, 1.0), (-1.0, 0.0)),
    Domain.HALFCUBE_PLUS: ((0.0, 1.0), (-1.0, 0.0)),
    Domain.HALFCUBE_MINUS: ((-1.0, 0.0), (-1.0, 0.0)),
    Domain.CUBE_HALF_X: ((-1.0, 0.0), (-1.0, 1.0)),
}


def domain_bounds(domain: Domain) -> np.ndarray:
    (x0, x1), (z0, z1) = DOMAIN_BOX[domain]
    return np.array([[x0, x1], [-1.0, 1.0], [z0, z1]])


def domain_volume(domain: Domain) -> float:
    b = domain_bounds(domain)
    return float(np.prod(b[:, 1] - b[:, 0]))


@dataclass(frozen=True)
class SlitSurface:
    """A slit in the plane ``x = 0``, described by its trace ``(y, z)`` in that plane."""

    kind: SlitKind

    @property
    def vertices(self) -> np.ndarray:
        if self.kind is SlitKind.SIGMA1:
            return np.array([[0, -1, -1], [0, 0, -1], [0, 0, 1], [0, -1, 1]], float)
        if self.kind is SlitKind.SIGMA2:
            return np.array([[0, 0, 0], [0, -1, -1], [0, -1, 1]], float)
        if self.kind is SlitKind.SIGMA3:
            return np.array([[0, 0, 0], [0, -1, 1], [0, 1, 1], [0, 1, -1], [0, -1, -1]], float)
        return np.array([[0, -1, -1], [0, 1, -1], [0, 1, 1], [0, -1, 1]], float)

    @property
    def tip(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Segments where the slit border meets the open domain, as (start, end) pairs."""
        if self.kind is SlitKind.SIGMA1:
            return [(np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, 1.0]))]
        if self.kind in (SlitKind.SIGMA2, SlitKind.SIGMA3):
            o = np.zeros(3)
            return [(o, np.array([0.0, -1.0, -1.0])), (o, np.array([0.0, -1.0, 1.0]))]
        return []

    def contains(self, y, z) -> np.ndarray:
        """Membership of ``(y, z)`` in the closed slit (walls of the cube included)."""
        y = np.asarray(y, float)
        z = np.asarray(z, float)
        inside_square = (np.abs(y) <= 1) & (np.abs(z) <= 1)
        if self.kind is SlitKind.SIGMA1:
            return inside_square & (y <= 0)
        if self.kind is SlitKind.SIGMA2:
            return inside_square & (y <= 0) & (np.abs(z) <= -y)
        if self.kind is SlitKind.SIGMA3:
            return inside_square & ~((y < 0) & (np.abs(z) < -y))
        return inside_square

    def on_tip(self, y, z) -> np.ndarray:
        y = np.asarray(y, float)
        z = np.asarray(z, float)
        if self.kind is SlitKind.SIGMA1:
            return (y == 0) & (np.abs(z) < 1)
        if self.kind in (SlitKind.SIGMA2, SlitKind.SIGMA3):
            return (y <= 0) & (y > -1) & (np.abs(z) == -y)
        return np.zeros(np.broadcast(y, z).shape, bool)

    def splits(self, y, z) -> np.ndarray:
        """Points whose mesh vertex must be doubled: inside the slit, off the tip and off the walls."""
        y = np.asarray(y, float)
        z = np.asarray(z, float)
        interior = (np.abs(y) < 1) & (np.abs(z) < 1)
        return self.contains(y, z) & interior & ~self.on_tip(y, z)

    def is_iota_invariant(self) -> bool:
        return True  # every slit lies in the fixed plane of the reflection


@dataclass(frozen=True)
class Patch:
    """Open axis-aligned rectangle ``{x_axis = value}`` with open bounds on the other two coordinates."""

    axis: int
    value: float
    bounds: tuple[tuple[float, float], tuple[float, float]]

    def contains(self, points: np.ndarray, on_plane: np.ndarray) -> np.ndarray:
        other = [a for a in range(3) if a != self.axis]
        ok = on_plane.copy()
        for a, (lo, hi) in zip(other, self.bounds):
            ok &= (points[:, a] > lo) & (points[:, a] < hi)
        return ok

    def mirrored(self) -> "Patch":
        """Image under the reflection in the first coordinate."""
        if self.axis == 0:
            return Patch(0, -self.value, self.bounds)
        (lo, hi), second = self.bounds  # first free coordinate is x
        return Patch(self.axis, self.value, ((-hi, -lo), second))


@dataclass(frozen=True)
class Constellation:
    """A model geometry: domain box, optional slit and the Neumann part ``M`` of the boundary.

    Every boundary facet not in ``M`` belongs to the Dirichlet set ``E``; both sides of a
    slit are always Dirichlet.
    """

    name: str
    domain: Domain
    slit: Optional[SlitSurface]
    neumann: tuple[Patch, ...]
    classification: Classification
    description: str = ""
    symmetric: bool = False
    half_variant: Optional[str] = None
    probe_point: tuple[float, float, float] = (0.0, 0.0, 0.0)
    probe_direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    probe_window: tuple[float, float] = (-0.5, 0.5)
    # normal of the flat boundary plane through the probe edge (Dirichlet/Neumann parts
    # lie in it); used to remove the quadratic particular solution before fitting
    probe_normal: tuple[float, float, float] = (1.0, 0.0, 0.0)
    probe_radius: float = 0.5
    notes: dict = field(default_factory=dict, compare=False)

    def in_neumann(self, centroids: np.ndarray, facet_coords: np.ndarray) -> np.ndarray:
        """Facets (given by centroid and their (F,3,3) corner coordinates) lying in ``M``."""
        out = np.zeros(len(centroids), bool)
        for patch in self.neumann:
            on_plane = np.all(facet_coords[:, :, patch.axis] == patch.value, axis=1)
            out |= patch.contains(centroids, on_plane)
        return out

    @property
    def bounds(self) -> np.ndarray:
        return domain_bounds(self.domain)

    @property
    def volume(self) -> float:
        return domain_volume(self.domain)


_TOP = 2  # axis index of z
INF = 2.0  # patch bounds beyond the cube

_S1 = SlitSurface(SlitKind.SIGMA1)


def _catalog() -> dict[str, Constellation]:
    e3 = (0.0, 0.0, 1.0)
    e1 = (1.0, 0.0, 0.0)
    leg = (0.0, -np.sqrt(0.5), -np.sqrt(0.5))
    entries = [
        Constellation(
            "cube", Domain.CUBE_MINUS_SLIT, None, (), Classification.REFERENCE,
            "C, full Dirichlet, no slit (smooth reference)", symmetric=True,
            probe_point=(0.0, 0.0, 0.0), probe_direction=e3),
        Constellation(
            "cube_minus_sigma1", Domain.CUBE_MINUS_SLIT, _S1, (), Classification.D_PARALLEL_C,
            "C minus Sigma1, E = dC and both slit sides", symmetric=True, half_variant="possi1",
            probe_direction=e3),
        Constellation(
            "cube_minus_sigma2", Domain.CUBE_MINUS_SLIT, SlitSurface(SlitKind.SIGMA2), (),
            Classification.D_PARALLEL_C, "C minus Sigma2 (triangle slit), full Dirichlet",
            symmetric=True, probe_direction=leg, probe_window=(0.55, 0.85)),
        Constellation(
            "cube_minus_sigma3", Domain.CUBE_MINUS_SLIT, SlitSurface(SlitKind.SIGMA3), (),
            Classification.D_PARALLEL_C, "C minus Sigma3 (square minus triangle), full Dirichlet",
            symmetric=True, probe_direction=leg, probe_window=(0.55, 0.85)),
        Constellation(
            "cube_minus_plane", Domain.CUBE_MINUS_SLIT, SlitSurface(SlitKind.PLANE), (),
            Classification.D_PARALLEL_D, "C cut by the full square {x=0}; two components",
            symmetric=True, probe_direction=e3),
        Constellation(
            "halfcube_minus_sigma1", Domain.HALFCUBE_MINUS_SLIT, _S1, (), Classification.R_C,
            "Q minus Sigma1, M empty", symmetric=True, half_variant="possi2",
            probe_direction=e3, probe_window=(-0.75, -0.25)),
        Constellation(
            "halfcube_minus_sigma1_top", Domain.HALFCUBE_MINUS_SLIT, _S1,
            (Patch(_TOP, 0.0, ((-INF, INF), (-INF, INF))),), Classification.R_C,
            "Q minus Sigma1, M = top face minus Sigma1", symmetric=True, half_variant="possi3",
            probe_direction=e3, probe_window=(-0.75, -0.25)),
        Constellation(
            "halfcube_minus_sigma1_halftop", Domain.HALFCUBE_MINUS_SLIT, _S1,
            (Patch(_TOP, 0.0, ((-INF, INF), (0.0, INF))),), Classification.R_C,
            "Q minus Sigma1, M = ]-1,1[ x ]0,1[ x {0} (mixed edge along y=z=0)",
            symmetric=True, half_variant="possi4",
            probe_direction=e1, probe_window=(0.25, 0.75), probe_normal=e3),
        Constellation(
            "halfcube_minus_plane", Domain.HALFCUBE_MINUS_SLIT, SlitSurface(SlitKind.PLANE),
            (Patch(_TOP, 0.0, ((-INF, INF), (-INF, INF))),), Classification.R_D,
            "Q cut by {x=0}, M = top face; components Q_- and Q_+",
            symmetric=True, probe_point=(0.0, 0.0, 0.0), probe_direction=(0.0, 1.0, 0.0),
            probe_window=(-0.5, 0.5)),
        Constellation(
            "halfcube_sym_possi1", Domain.CUBE_HALF_X, None,
            (Patch(0, 0.0, ((0.0, INF), (-INF, INF))),), Classification.MODEL_HALF,
            "C_-, M_- = {0} x ]0,1[ x ]-1,1[", probe_direction=e3),
        Constellation(
            "halfcube_sym_possi2", Domain.HALFCUBE_MINUS, None,
            (Patch(0, 0.0, ((0.0, INF), (-INF, INF))),), Classification.MODEL_HALF,
            "Q_-, M_- = {0} x ]0,1[ x ]-1,0[", probe_direction=e3,
            probe_window=(-0.75, -0.25)),
        Constellation(
            "halfcube_sym_possi3", Domain.HALFCUBE_MINUS, None,
            (Patch(_TOP, 0.0, ((-INF, INF), (-INF, INF))),
             Patch(0, 0.0, ((0.0, INF), (-INF, INF)))), Classification.MODEL_HALF,
            "Q_-, M_- = ]-1,0[ x ]-1,1[ x {0} u {0} x ]0,1[ x ]-1,0[",
            probe_direction=e3, probe_window=(-0.75, -0.25)),
        Constellation(
            "halfcube_sym_possi4", Domain.HALFCUBE_MINUS, None,
            (Patch(_TOP, 0.0, ((-INF, INF), (0.0, INF))),
             Patch(0, 0.0, ((0.0, INF), (-INF, INF)))), Classification.MODEL_HALF,
            "Q_-, M_- = ]-1,0[ x ]0,1[ x {0} u {0} x ]0,1[ x ]-1,0]",
            probe_direction=e3, probe_window=(-0.75, -0.25)),
        Constellation(
            "cube_minus_half_neumann", Domain.CUBE_HALF_X, None,
            (Patch(0, 0.0, ((0.0, INF), (-INF, INF))),), Classification.MODEL_HALF,
            "C_- with M = {0} x ]0,1[ x ]-1,1[ (Dirichlet elsewhere)", probe_direction=e3),
        Constellation(
            "halfcube_plus_possi4", Domain.HALFCUBE_PLUS, None,
            (Patch(_TOP, 0.0, ((-INF, INF), (0.0, INF))),
             Patch(0, 0.0, ((0.0, INF), (-INF, INF)))), Classification.MODEL_HALF,
            "Q_+, M_+ = iota(M_-) of possibility 4", probe_direction=e3,
            probe_window=(-0.75, -0.25)),
        Constellation(
            "neumann_edge_M7", Domain.HALFCUBE_MINUS, None,
            (Patch(_TOP, 0.0, ((-INF, INF), (0.0, INF))),), Classification.MODEL_HALF,
            "Q_-, M_- = ]-1,0[ x ]0,1[ x {0}, rest Dirichlet",
            probe_direction=e1, probe_window=(-0.75, -0.25), probe_normal=e3),
        Constellation(
            "neumann_edge_M8", Domain.HALFCUBE_MINUS, None,
            (Patch(_TOP, 0.0, ((-INF, INF), (-INF, INF))),
             Patch(0, 0.0, ((0.0, INF), (-INF, INF)))), Classification.MODEL_HALF,
            "Q_-, M_- = ]-1,0[ x ]-1,1[ x {0} u {0} x ]0,1[ x ]-1,0]",
            probe_direction=e3, probe_window=(-0.75, -0.25)),
    ]
    return {c.name: c for c in entries}


CATALOG = _catalog()


def catalog_names() -> list[str]:
    return list(CATALOG)


def build_constellation(name: str) -> Constellation:
    try:
        return CATALOG[name]
    except KeyError:
        valid = ", ".join(CATALOG)
        raise CatalogError(f"unknown constellation {name!r}; valid names: {valid}") from None


def symmetric_slit_constellations() -> list[Constellation]:
    """The four symmetric slit constellations that reduce to half problems."""
    return [c for c in CATALOG.values() if c.half_variant is not None]
