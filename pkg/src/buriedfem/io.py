"""Legacy-VTK and JSON output."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .geometry.mesh import TetMesh

VTK_TETRA = 10
VTK_TRIANGLE = 5


def _fmt(a) -> str:
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a))


def _write_vtk(path, points, cells, cell_type, point_data, cell_data, title):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double", _fmt(points)]
    k = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (k + 1)}")
    lines.extend(f"{k} " + " ".join(map(str, c)) for c in cells.tolist())
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend([str(cell_type)] * len(cells))
    for header, data, n in (("POINT_DATA", point_data, len(points)),
                            ("CELL_DATA", cell_data, len(cells))):
        if not data:
            continue
        lines.append(f"{header} {n}")
        for name, values in data.items():
            v = np.asarray(values)
            if v.shape[0] != n:
                raise ValueError(f"field {name!r} has {v.shape[0]} entries, expected {n}")
            if v.ndim == 2 and v.shape[1] == 3:
                lines.append(f"VECTORS {name} double")
                lines.append(_fmt(v))
            elif np.issubdtype(v.dtype, np.integer):
                lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
                lines.extend(map(str, v.tolist()))
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines.extend(repr(float(x)) for x in v)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_vtk(path, mesh: TetMesh, point_data: Optional[Mapping] = None,
              cell_data: Optional[Mapping] = None) -> Path:
    """Tetrahedral mesh with nodal and per-tet fields; region index is always included."""
    cd = {"region": mesh.regions.astype(np.int64)}
    cd.update(cell_data or {})
    return _write_vtk(path, mesh.vertices, np.asarray(mesh.tets), VTK_TETRA,
                      dict(point_data or {}), cd, mesh.name or "mesh")


def write_surface_vtk(path, mesh: TetMesh) -> Path:
    """Boundary facets with their kind and Dirichlet/Neumann label."""
    cd = {"facet_kind": mesh.facet_kind.astype(np.int64),
          "facet_label": mesh.facet_label.astype(np.int64)}
    return _write_vtk(path, mesh.vertices, np.asarray(mesh.facets), VTK_TRIANGLE, {}, cd,
                      f"{mesh.name} boundary")


def read_vtk_points(path) -> np.ndarray:
    """Points of a legacy ASCII file written by :func:`write_vtk` (round-trip checks)."""
    lines = Path(path).read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("POINTS"))
    n = int(lines[i].split()[1])
    return np.array([[float(x) for x in l.split()] for l in lines[i + 1:i + 1 + n]])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path
