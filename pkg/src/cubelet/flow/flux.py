"""Inviscid face fluxes: central average plus Roe-type dissipation.

The dissipation is assembled in primitive variables from the wave structure
of the pseudo-time preconditioned system; with the reference velocity equal
to the sound speed it reduces to the standard Roe splitting, and at low Mach
numbers the acoustic eigenvalues contract toward the convective speed, which
is what keeps the scheme accurate and convergent in the incompressible limit.
Species jumps ride on the entropy/contact wave.
"""

from __future__ import annotations

import numpy as np

from .. import vars as V
from .gas import GasModel


def analytic_flux(W: np.ndarray, gas: GasModel, axis: int, out=None) -> np.ndarray:
    """Exact flux F(U) normal to `axis` from primitive states."""
    if out is None:
        out = np.empty_like(W)
    P = W[:, V.P]
    T = W[:, V.T]
    rho = P / (gas.R * T)
    un = W[:, V.UX + axis]
    m = rho * un
    out[:, V.RHO] = m
    for c in range(3):
        out[:, V.MX + c] = m * W[:, V.UX + c]
    out[:, V.MX + axis] += P
    ke = 0.5 * (W[:, V.UX] ** 2 + W[:, V.UY] ** 2 + W[:, V.UZ] ** 2)
    rhoe = P / (gas.gamma - 1.0) + rho * ke
    out[:, V.EN] = (rhoe + P) * un
    for k in range(gas.n_species):
        out[:, V.Y0 + k] = m * W[:, V.Y0 + k]
    return out


def _entropy_fix(lam: np.ndarray, delta: np.ndarray) -> np.ndarray:
    a = np.abs(lam)
    small = a < delta
    return np.where(small, (lam * lam + delta * delta) / (2.0 * np.maximum(delta, 1e-300)), a)


def roe_flux(
    WL: np.ndarray,
    WR: np.ndarray,
    gas: GasModel,
    axis: int,
    preconditioned: bool = True,
    eps_mach: float = 1e-3,
    fix_coeff: float = 0.05,
    uref_floor=0.0,
) -> np.ndarray:
    """Roe flux from left/right primitive face states (variable axis 1)."""
    g = gas.gamma
    FL = analytic_flux(WL, gas, axis)
    FR = analytic_flux(WR, gas, axis)

    rhoL = WL[:, V.P] / (gas.R * WL[:, V.T])
    rhoR = WR[:, V.P] / (gas.R * WR[:, V.T])
    sL = np.sqrt(rhoL)
    sR = np.sqrt(rhoR)
    wsum = sL + sR
    u = np.stack([(sL * WL[:, V.UX + c] + sR * WR[:, V.UX + c]) / wsum for c in range(3)], axis=1)
    keL = 0.5 * (WL[:, V.UX] ** 2 + WL[:, V.UY] ** 2 + WL[:, V.UZ] ** 2)
    keR = 0.5 * (WR[:, V.UX] ** 2 + WR[:, V.UY] ** 2 + WR[:, V.UZ] ** 2)
    HL = gas.cp * WL[:, V.T] + keL
    HR = gas.cp * WR[:, V.T] + keR
    Hh = (sL * HL + sR * HR) / wsum
    ke = 0.5 * (u[:, 0] ** 2 + u[:, 1] ** 2 + u[:, 2] ** 2)
    c2 = np.maximum((g - 1.0) * (Hh - ke), 1e-300)
    ch = np.sqrt(c2)
    Th = c2 / (g * gas.R)
    rhoh = sL * sR
    un = u[:, axis]

    if preconditioned:
        # reference velocity: local speed with a compressibility floor and,
        # for time-accurate dual time stepping, an unsteady floor ~ h/(pi dt)
        Ur = np.maximum(np.sqrt(2.0 * ke), eps_mach * ch)
        Ur = np.minimum(np.maximum(Ur, uref_floor), ch)
    else:
        Ur = ch
    a = (Ur * Ur) / c2
    alpha = 0.5 * (1.0 - a)
    D = -alpha * un  # acoustic eigenvalue shift u' - u_n
    cp2 = alpha * alpha * un * un + a * c2
    cprime = np.sqrt(cp2)
    lam0 = un
    lamP = un + D + cprime
    lamM = un + D - cprime

    delta = fix_coeff * (np.abs(un) + cprime)
    a0 = np.abs(lam0)
    aP = _entropy_fix(lamP, delta)
    aM = _entropy_fix(lamM, delta)

    dP = WR[:, V.P] - WL[:, V.P]
    dT = WR[:, V.T] - WL[:, V.T]
    dun = WR[:, V.UX + axis] - WL[:, V.UX + axis]

    # acoustic wave strengths in (P, u_n): r_pm = [rho (D -+ c'), 1]
    core = (dP - rhoh * D * dun) / (rhoh * cprime)
    sigP = 0.5 * (dun + core)
    sigM = 0.5 * (dun - core)

    # temperature components of the acoustic eigenvectors
    b = -(1.0 - a) / (rhoh * gas.cp)
    kT = (g - 1.0) * Th + b * rhoh * c2
    TsP = b * un * rhoh + kT / (D + cprime)
    TsM = b * un * rhoh + kT / (D - cprime)

    # primitive-space dissipation vector dW = R |Lambda| R^-1 (WR - WL)
    nv = WL.shape[1]
    dW = np.empty_like(WL)
    sigT = dT - sigP * TsP - sigM * TsM
    dW[:, V.P] = aP * sigP * rhoh * (D + cprime) + aM * sigM * rhoh * (D - cprime)
    dW[:, V.UX + axis] = aP * sigP + aM * sigM
    for c in range(3):
        if c != axis:
            dW[:, V.UX + c] = a0 * (WR[:, V.UX + c] - WL[:, V.UX + c])
    dW[:, V.T] = a0 * sigT + aP * sigP * TsP + aM * sigM * TsM
    for k in range(V.Y0, nv):
        dW[:, k] = a0 * (WR[:, k] - WL[:, k])

    # conservative dissipation F_d = -1/2 Gamma dW
    theta = 1.0 / (Ur * Ur) + (g - 1.0) / c2
    rhoT = -rhoh / Th
    dp_ = dW[:, V.P]
    dT_ = dW[:, V.T]
    drho = theta * dp_ + rhoT * dT_
    flux = 0.5 * (FL + FR)
    flux[:, V.RHO] -= 0.5 * drho
    mom_common = drho  # rho-weighted carrier for velocity entries
    for c in range(3):
        flux[:, V.MX + c] -= 0.5 * (u[:, c] * drho + rhoh * dW[:, V.UX + c])
    udot = u[:, 0] * dW[:, V.UX] + u[:, 1] * dW[:, V.UY] + u[:, 2] * dW[:, V.UZ]
    dE = (theta * Hh - 1.0) * dp_ + rhoh * udot + (rhoT * Hh + rhoh * gas.cp) * dT_
    flux[:, V.EN] -= 0.5 * dE
    for k in range(V.Y0, nv):
        Yh = (sL * WL[:, k] + sR * WR[:, k]) / wsum
        flux[:, k] -= 0.5 * (Yh * drho + rhoh * dW[:, k])
    return flux


def spectral_radius(W: np.ndarray, gas: GasModel, axis: int, preconditioned: bool, eps_mach: float, uref_floor=0.0):
    """Convective wave-speed bound of the (preconditioned) system per cell."""
    T = W[:, V.T]
    c = gas.sound_speed(T)
    un = W[:, V.UX + axis]
    if not preconditioned:
        return np.abs(un) + c
    ke2 = W[:, V.UX] ** 2 + W[:, V.UY] ** 2 + W[:, V.UZ] ** 2
    Ur = np.minimum(np.maximum(np.maximum(np.sqrt(ke2), eps_mach * c), uref_floor), c)
    a = (Ur / c) ** 2
    alpha = 0.5 * (1.0 - a)
    up = un * (1.0 - alpha)
    cp = np.sqrt(alpha * alpha * un * un + a * c * c)
    return np.abs(up) + cp
