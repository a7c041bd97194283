from .classify import (
    CELL_FLUID,
    CELL_GHOST,
    CELL_NEAR_WALL,
    CELL_SOLID,
    GhostData,
    IbmMask,
    all_fluid_mask,
    classify_cells,
)
from .ghost import WallCondition, apply_ibm
from .stl_io import (
    StlParseError,
    TriangleSoup,
    WallTag,
    box_tris,
    ingest_stl,
    sphere_tris,
    write_ascii_stl,
    write_binary_stl,
)

__all__ = [
    "CELL_FLUID",
    "CELL_GHOST",
    "CELL_NEAR_WALL",
    "CELL_SOLID",
    "GhostData",
    "IbmMask",
    "all_fluid_mask",
    "classify_cells",
    "WallCondition",
    "apply_ibm",
    "StlParseError",
    "TriangleSoup",
    "WallTag",
    "box_tris",
    "ingest_stl",
    "sphere_tris",
    "write_ascii_stl",
    "write_binary_stl",
]
