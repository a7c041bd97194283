from .core import (
    DIRECTIONS,
    Cube,
    CubeGrid,
    GridError,
    OutsideDomainError,
    RefinementSpec,
    build_grid,
    pack_cell_index,
    required_level,
    unpack_cell_index,
)
from .halo import ExchangePlan, exchange_halos
from .partition import partition, worker_slices

__all__ = [
    "DIRECTIONS",
    "Cube",
    "CubeGrid",
    "GridError",
    "OutsideDomainError",
    "RefinementSpec",
    "build_grid",
    "pack_cell_index",
    "required_level",
    "unpack_cell_index",
    "ExchangePlan",
    "exchange_halos",
    "partition",
    "worker_slices",
]
