"""Single-droplet physics: drag, heat-up and evaporation.

Droplets are pure water; the nonvolatile (salt/virus) content is modelled
solely by halting evaporation at a 0.5 micrometre radius, after which the
particle continues as an aerosol nucleus of frozen size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

R_UNIVERSAL = 8.31446261815324  # J/(mol K)
M_WATER = 0.01801528  # kg/mol
M_AIR = 0.0289647

NUCLEATION_DIAMETER_M = 1.0e-6  # evaporation stops at 0.5 um radius


@dataclass
class LiquidProps:
    density: float = 998.0  # kg/m^3
    specific_heat: float = 4186.0  # J/(kg K)
    latent_heat: float = 2.45e6  # J/kg
    f1_constant: float | None = None  # None = Abramzon-Sirignano style factor


def saturation_pressure(T):
    """Clausius-Clapeyron from the triple point, constant latent heat."""
    L = 2.45e6
    return 611.657 * np.exp(L * M_WATER / R_UNIVERSAL * (1.0 / 273.16 - 1.0 / np.asarray(T)))


def surface_vapor_fraction(T_d, P):
    """Vapor mass fraction at the droplet surface (pure-water saturation)."""
    Ps = np.minimum(saturation_pressure(T_d), 0.999 * np.asarray(P))
    return Ps * M_WATER / (Ps * M_WATER + (P - Ps) * M_AIR)


def mass_transfer_number(T_d, P, Y_inf):
    Ys = surface_vapor_fraction(T_d, P)
    return (Ys - Y_inf) / np.maximum(1.0 - Ys, 1e-12)


def drag_factor(Re):
    """C_D Re / 24: finite Stokes limit (=1) at Re = 0.

    Schiller-Naumann below Re = 1000, constant C_D = 0.44 above.
    """
    Re = np.asarray(Re, dtype=float)
    sn = 1.0 + 0.15 * Re**0.687
    plateau = 0.44 * Re / 24.0
    return np.where(Re <= 1000.0, sn, plateau)


def drag_coefficient(Re):
    """Schiller-Naumann drag coefficient; diverges as 24/Re for Re -> 0.

    The momentum update never divides by Re: it uses drag_factor, where the
    24/Re singularity is absorbed analytically.
    """
    Re = np.asarray(Re, dtype=float)
    if np.any(Re < 0):
        raise ValueError("Re must be non-negative")
    safe = np.where(Re > 0.0, Re, 1.0)
    cd = np.where(Re <= 1000.0, 24.0 / safe * (1.0 + 0.15 * safe**0.687), 0.44)
    return np.where(Re == 0.0, np.inf, cd)


def response_time(d, mu_gas, rho_d):
    """Stokes response time rho_d d^2 / (18 mu)."""
    return rho_d * d * d / (18.0 * mu_gas)


def integrate_motion(pos, vel, d, u_gas, rho_gas, mu_gas, gravity, dt, rho_d):
    """Exponential (stiff-safe) drag update, exact for linearised drag.

    Returns (new_pos, new_vel).  Positions advance by the trapezoid of the
    old and new velocities.
    """
    du = vel - u_gas
    speed = np.sqrt((du * du).sum(axis=1))
    Re = rho_gas * speed * d / mu_gas
    tau = response_time(d, mu_gas, rho_d) / drag_factor(Re)
    ex = np.exp(-dt / tau)
    g = np.asarray(gravity)
    new_vel = u_gas + du * ex[:, None] + g[None, :] * (tau * (1.0 - ex))[:, None]
    new_pos = pos + 0.5 * dt * (vel + new_vel)
    return new_pos, new_vel


def evaporation_rates(d, m, T_d, u_rel, gas_state, liquid: LiquidProps, gas):
    """(dm/dt, dT/dt, Sh, B_M) for the current droplet state.

    gas_state: dict with rho, mu, T, P, Y (ambient vapor mass fraction),
    arrays aligned with the particles.
    """
    rho_g = gas_state["rho"]
    mu_g = gas_state["mu"]
    Re = rho_g * u_rel * d / mu_g
    Sc = gas.schmidt[0] if gas.n_species else 1.0
    Pr = gas.prandtl
    Sh = 2.0 + 0.6 * np.sqrt(Re) * Sc ** (1.0 / 3.0)
    Nu = 2.0 + 0.6 * np.sqrt(Re) * Pr ** (1.0 / 3.0)
    tau = response_time(d, mu_g, liquid.density)
    BM = mass_transfer_number(T_d, gas_state["P"], gas_state["Y"])
    ln1B = np.log1p(np.maximum(BM, -0.95))
    dm_dt = -(m / tau) * (Sh / (3.0 * Sc)) * ln1B
    if liquid.f1_constant is not None:
        f1 = liquid.f1_constant
    else:
        # evaporative heat-transfer correction beta / (e^beta - 1)
        beta = 0.5 * Pr * (Sh / Sc) * ln1B
        safe = np.where(np.abs(beta) > 1e-12, beta, 1e-12)
        f1 = np.where(np.abs(beta) > 1e-12, safe / np.expm1(safe), 1.0)
    cp_gas = gas.cp
    dT_dt = (Nu / (3.0 * Pr)) * (cp_gas / liquid.specific_heat) * (f1 / tau) * (
        gas_state["T"] - T_d
    ) + (dm_dt / m) * (liquid.latent_heat / liquid.specific_heat)
    return dm_dt, dT_dt, Sh, BM


def evaporate(d, m, T_d, d0, u_rel, gas_state, liquid: LiquidProps, gas, dt):
    """Sub-stepped explicit integration of mass and temperature over dt.

    Sub-steps cap the fractional mass change at 10% and the temperature
    change at 2 K.  Returns (d, m, T_d, evaporated_mass >= 0 per particle,
    nucleated mask).  Condensation (B_M < 0) is allowed but the diameter
    never exceeds its ejection value d0.
    """
    n = len(d)
    remaining = np.full(n, float(dt))
    evaporated = np.zeros(n)
    nucleated = np.zeros(n, dtype=bool)
    d = d.copy()
    m = m.copy()
    T_d = T_d.copy()
    for _ in range(200):
        active = remaining > 0.0
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        sub_gas = {k: (v[idx] if np.ndim(v) else v) for k, v in gas_state.items()}
        dm_dt, dT_dt, _, _ = evaporation_rates(
            d[idx], m[idx], T_d[idx], u_rel[idx], sub_gas, liquid, gas
        )
        dt_m = 0.1 * m[idx] / np.maximum(np.abs(dm_dt), 1e-300)
        dt_T = 2.0 / np.maximum(np.abs(dT_dt), 1e-300)
        step = np.minimum(remaining[idx], np.minimum(dt_m, dt_T))
        dm = dm_dt * step
        m_new = m[idx] + dm
        # nucleation floor: stop exactly at the cutoff diameter
        m_floor = liquid.density * np.pi * NUCLEATION_DIAMETER_M**3 / 6.0
        hit = m_new <= m_floor
        dm = np.where(hit, m_floor - m[idx], dm)
        m_new = m[idx] + dm
        evaporated[idx] += np.maximum(-dm, 0.0)
        m[idx] = m_new
        T_d[idx] = T_d[idx] + dT_dt * step
        d_new = (6.0 * m_new / (np.pi * liquid.density)) ** (1.0 / 3.0)
        # condensation cap at the ejection diameter
        over = d_new > d0[idx]
        if over.any():
            d_new = np.minimum(d_new, d0[idx])
            m[idx] = np.where(over, liquid.density * np.pi * d_new**3 / 6.0, m[idx])
        d[idx] = d_new
        newly = np.zeros(n, dtype=bool)
        newly[idx] = hit
        nucleated |= newly
        remaining[idx] = np.where(hit, 0.0, remaining[idx] - step)
    return d, m, T_d, evaporated, nucleated
