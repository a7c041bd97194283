"""Gas model and conservative/primitive conversions.

Single-R ideal-gas mixture: P = rho R T, e = P/((gamma-1) rho) + |u|^2/2.
Species mass fractions ride along as passive scalars (the carrier gas is the
remainder), with Fickian diffusion mu/Sc_k.  Viscosity and conductivity
follow Sutherland's law unless a constant viscosity is forced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import vars as V


class NonPhysicalState(FloatingPointError):
    """Raised when a conversion meets rho <= 0 or non-positive energy."""

    def __init__(self, message, bad_cells=None):
        super().__init__(message)
        self.bad_cells = bad_cells


@dataclass
class GasModel:
    gamma: float = 1.4
    R: float = 287.0  # J/(kg K)
    prandtl: float = 0.72
    schmidt: tuple[float, ...] = (1.0,)
    mu_ref: float = 1.716e-5  # Sutherland reference viscosity, Pa s
    T_ref: float = 273.15
    sutherland_S: float = 110.4
    constant_mu: float | None = None  # overrides Sutherland when set
    rho0: float = 1.2  # far-field ambient density for buoyancy
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if self.gamma <= 1 or self.R <= 0:
            raise ValueError("need gamma > 1 and R > 0")

    @property
    def n_species(self) -> int:
        return len(self.schmidt)

    @property
    def cp(self) -> float:
        return self.gamma * self.R / (self.gamma - 1)

    @property
    def cv(self) -> float:
        return self.R / (self.gamma - 1)

    def mu(self, T):
        if self.constant_mu is not None:
            return np.full_like(np.asarray(T, dtype=float), self.constant_mu)
        return self.mu_ref * (T / self.T_ref) ** 1.5 * (self.T_ref + self.sutherland_S) / (
            T + self.sutherland_S
        )

    def conductivity(self, T):
        return self.mu(T) * self.cp / self.prandtl

    def sound_speed(self, T):
        return np.sqrt(self.gamma * self.R * T)


def primitives_from_conservative(U: np.ndarray, gas: GasModel, out: np.ndarray | None = None):
    """U (..., nv, ...) with variable axis 1 -> primitives, same layout.

    Raises NonPhysicalState when any cell has rho <= 0 or e_int <= 0; the
    offending flat indices ride on the exception for step rejection.
    """
    if out is None:
        out = np.empty_like(U)
    rho = U[:, V.RHO]
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise NonPhysicalState("non-positive density", np.nonzero(~(rho > 0)))
    inv = 1.0 / rho
    ux = U[:, V.MX] * inv
    uy = U[:, V.MY] * inv
    uz = U[:, V.MZ] * inv
    ke = 0.5 * (ux * ux + uy * uy + uz * uz)
    e_int = U[:, V.EN] * inv - ke
    if np.any(e_int <= 0.0):
        raise NonPhysicalState("non-positive internal energy", np.nonzero(~(e_int > 0)))
    P = (gas.gamma - 1.0) * rho * e_int
    out[:, V.P] = P
    out[:, V.UX] = ux
    out[:, V.UY] = uy
    out[:, V.UZ] = uz
    out[:, V.T] = P * inv / gas.R
    for k in range(gas.n_species):
        out[:, V.Y0 + k] = U[:, V.Y0 + k] * inv
    return out


def conservative_from_primitives(W: np.ndarray, gas: GasModel, out: np.ndarray | None = None):
    if out is None:
        out = np.empty_like(W)
    P = W[:, V.P]
    T = W[:, V.T]
    rho = P / (gas.R * T)
    ux, uy, uz = W[:, V.UX], W[:, V.UY], W[:, V.UZ]
    out[:, V.RHO] = rho
    out[:, V.MX] = rho * ux
    out[:, V.MY] = rho * uy
    out[:, V.MZ] = rho * uz
    out[:, V.EN] = P / (gas.gamma - 1.0) + 0.5 * rho * (ux * ux + uy * uy + uz * uz)
    for k in range(gas.n_species):
        out[:, V.Y0 + k] = rho * W[:, V.Y0 + k]
    return out
