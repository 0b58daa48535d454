"""Model domains, slits, boundary constellations and their tetrahedral meshes."""

from .catalog import (
    CATALOG,
    Classification,
    Constellation,
    Domain,
    Patch,
    SlitKind,
    SlitSurface,
    build_constellation,
    catalog_names,
    symmetric_slit_constellations,
)
from .mesh import (
    FACET_KIND_NAMES,
    INTERFACE,
    LABEL_E,
    LABEL_M,
    OUTER,
    REGION_NAMES,
    SLIT_MINUS,
    SLIT_PLUS,
    UNSET,
    TetMesh,
    build_mesh,
    check_symmetry,
    classify_boundary,
    generate_mesh,
    mirror_region,
    signed_volumes,
    tet_image_index,
)
from .components import split_components, face_adjacency
from .twoset import TwoSetReport, check_two_set
