"""Piecewise-constant symmetric coefficient fields on mesh regions."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DefinitenessError, MeshError, SchemaError
from .geometry.mesh import TetMesh, check_symmetry, mirror_region

IOTA_MATRIX = np.diag([-1.0, 1.0, 1.0])

# storage order of the six independent entries
VOIGT = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


def spd_matrix(entries) -> np.ndarray:
    """Symmetric 3x3 matrix from a 3x3 array (upper triangle is used) or six Voigt entries."""
    a = np.asarray(entries, float)
    if a.shape == (6,):
        m = np.empty((3, 3))
        for v, (i, j) in zip(a, VOIGT):
            m[i, j] = m[j, i] = v
        return m
    if a.shape != (3, 3):
        raise SchemaError(f"matrix must have 6 entries or shape (3, 3), got shape {a.shape}")
    return np.triu(a) + np.triu(a, 1).T


def voigt(m: np.ndarray) -> list[float]:
    return [float(m[i, j]) for i, j in VOIGT]


def iota_conjugate(m: np.ndarray) -> np.ndarray:
    """``ι m ι``: flips the sign of the entries coupling the first coordinate to the others."""
    out = np.array(m, float)
    out[0, 1:] *= -1.0
    out[1:, 0] *= -1.0
    return out


@dataclass(frozen=True)
class CoefficientField:
    """Region name -> symmetric 3x3 matrix.

    ``limits`` maps a label to ``{"point": [x, y, z], "region": name}`` and declares that the
    limit of the field at that point is the value of the adjacent region.
    """

    values: Mapping[str, np.ndarray]
    limits: Mapping[str, dict] = field(default_factory=dict)
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        vals = {}
        for k, v in self.values.items():
            m = spd_matrix(v)
            m.setflags(write=False)
            vals[str(k)] = m
        object.__setattr__(self, "values", vals)
        for label, lim in self.limits.items():
            if lim.get("region") not in vals:
                raise SchemaError(f"limit {label!r} refers to unknown region {lim.get('region')!r}")

    @classmethod
    def constant(cls, matrix, regions) -> "CoefficientField":
        names = regions.present_regions() if isinstance(regions, TetMesh) else list(regions)
        return cls({r: matrix for r in names})

    @classmethod
    def identity(cls, regions) -> "CoefficientField":
        return cls.constant(np.eye(3), regions)

    def __getitem__(self, region: str) -> np.ndarray:
        return self.values[region]

    @property
    def regions(self) -> list[str]:
        return list(self.values)

    def per_tet(self, mesh: TetMesh) -> np.ndarray:
        """(T, 3, 3) array of the matrix on every tet."""
        table = np.zeros((len(mesh.region_names), 3, 3))
        present = set(np.unique(mesh.regions).tolist())
        for i, name in enumerate(mesh.region_names):
            if name in self.values:
                table[i] = self.values[name]
            elif i in present:
                raise MeshError(f"coefficient field has no value for region {name!r}")
        return table[mesh.regions]

    def limit(self, label: str) -> np.ndarray:
        return self.values[self.limits[label]["region"]]

    def map_values(self, fn) -> "CoefficientField":
        return CoefficientField({k: fn(v) for k, v in self.values.items()}, self.limits,
                                self.metadata)

    def scaled(self, s: float) -> "CoefficientField":
        return self.map_values(lambda m: s * m)

    def to_dict(self) -> dict:
        return {
            "regions": [{"label": k, "matrix": voigt(v)} for k, v in sorted(self.values.items())],
            "limits": {k: dict(v) for k, v in sorted(self.limits.items())} or None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientField":
        try:
            vals = {r["label"]: spd_matrix(r["matrix"]) for r in d["regions"]}
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"coefficient field JSON is malformed: {exc}") from None
        return cls(vals, d.get("limits") or {})

    def digest(self) -> str:
        """Short stable hash of the region values, used to tag reports."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def ellipticity_constant(c: CoefficientField) -> float:
    """Smallest eigenvalue over all regions."""
    worst, worst_region = np.inf, None
    for name, m in c.values.items():
        lam = float(np.linalg.eigvalsh(m)[0])
        if lam < worst:
            worst, worst_region = lam, name
    if not worst > 0:
        raise DefinitenessError(
            f"coefficient is not elliptic: region {worst_region!r} has eigenvalue {worst:.3g}")
    return worst


def check_iota_invariance(c: CoefficientField, mesh: TetMesh, tol: float = 1e-14) -> bool:
    """True iff the value on each mirrored region equals ``ι m ι`` of the original one."""
    if mesh.symmetry_map is None:
        raise MeshError("mesh has no symmetry map")
    for name in mesh.present_regions():
        other = mirror_region(name)
        if name not in c.values or other not in c.values:
            return False
        diff = np.abs(c.values[other] - iota_conjugate(c.values[name]))
        if np.max(diff) > tol * max(1.0, float(np.max(np.abs(c.values[name])))):
            return False
    return True


def mirror_extend(mu_plus, mesh: TetMesh) -> CoefficientField:
    """Field equal to ``mu_plus`` on ``x > 0`` and ``ι mu_plus ι`` on ``x < 0``."""
    if mesh.symmetry_map is None or not check_symmetry(mesh):
        raise MeshError("mirror extension needs a mesh that is symmetric under x -> -x")
    m = spd_matrix(mu_plus)
    vals = {}
    for name in mesh.present_regions():
        vals[name] = m if name.startswith("x+") else iota_conjugate(m)
    return CoefficientField(vals)


def spectral_sup(c: CoefficientField) -> float:
    """Max over regions of the spectral norm."""
    return max(float(np.max(np.abs(np.linalg.eigvalsh(m)))) for m in c.values.values())


def perturb(c: CoefficientField, delta: CoefficientField, eps: Optional[float] = None
            ) -> CoefficientField:
    """Region-wise ``c + delta``; records the size of ``delta`` in the metadata."""
    size = spectral_sup(delta)
    if eps is not None and size > eps * (1 + 1e-12):
        raise DefinitenessError(f"perturbation size {size:.3g} exceeds eps = {eps:.3g}")
    missing = set(delta.values) - set(c.values)
    if missing:
        raise SchemaError(f"perturbation refers to unknown regions {sorted(missing)}")
    vals = {k: v + delta.values.get(k, 0.0) for k, v in c.values.items()}
    out = CoefficientField(vals, c.limits, {**c.metadata, "eps": eps, "delta_sup": size})
    ellipticity_constant(out)
    return out
