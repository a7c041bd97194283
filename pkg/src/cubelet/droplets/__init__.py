from .driver import DropletTracker, EmissionInSolidError
from .emit import EmissionSpec, sample_event
from .particles import (
    AIRBORNE,
    DEPOSITED_WALL,
    EXITED,
    NUCLEATED,
    STATUS_NAMES,
    ParticleSets,
    read_snapshot_csv,
    write_snapshot_csv,
    write_snapshot_vtk,
)
from .physics import (
    NUCLEATION_DIAMETER_M,
    LiquidProps,
    drag_coefficient,
    drag_factor,
    evaporate,
    evaporation_rates,
    integrate_motion,
    mass_transfer_number,
    response_time,
    saturation_pressure,
    surface_vapor_fraction,
)

__all__ = [
    "DropletTracker",
    "EmissionInSolidError",
    "EmissionSpec",
    "sample_event",
    "AIRBORNE",
    "DEPOSITED_WALL",
    "EXITED",
    "NUCLEATED",
    "STATUS_NAMES",
    "ParticleSets",
    "read_snapshot_csv",
    "write_snapshot_csv",
    "write_snapshot_vtk",
    "NUCLEATION_DIAMETER_M",
    "LiquidProps",
    "drag_coefficient",
    "drag_factor",
    "evaporate",
    "evaporation_rates",
    "integrate_motion",
    "mass_transfer_number",
    "response_time",
    "saturation_pressure",
    "surface_vapor_fraction",
]
