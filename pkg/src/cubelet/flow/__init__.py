from .domain import BCSpec, Domain
from .flux import analytic_flux, roe_flux, spectral_radius
from .gas import (
    GasModel,
    NonPhysicalState,
    conservative_from_primitives,
    primitives_from_conservative,
)
from .reconstruct import face_states_axis
from .solver import FlowSolver, InnerSettings, SolverDivergence, StepStats
from .viscous import viscous_face_flux

__all__ = [
    "BCSpec",
    "Domain",
    "analytic_flux",
    "roe_flux",
    "spectral_radius",
    "GasModel",
    "NonPhysicalState",
    "conservative_from_primitives",
    "primitives_from_conservative",
    "face_states_axis",
    "FlowSolver",
    "InnerSettings",
    "SolverDivergence",
    "StepStats",
    "viscous_face_flux",
]
