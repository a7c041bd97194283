"""Canonical variable ordering for field arrays.

Conservative: [rho, rho*ux, rho*uy, rho*uz, rho*e, rho*Y_k...]
Primitive:    [P, ux, uy, uz, T, Y_k...]
"""

RHO = 0
MX, MY, MZ = 1, 2, 3
EN = 4

P = 0
UX, UY, UZ = 1, 2, 3
T = 4
Y0 = 5  # first species slot in both layouts

N_GAS = 5  # flow variables before species


def n_vars(n_species: int) -> int:
    return N_GAS + n_species
