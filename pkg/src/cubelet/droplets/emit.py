"""Droplet emission events (cough / speech / singing)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .physics import NUCLEATION_DIAMETER_M


@dataclass
class EmissionSpec:
    source_m: tuple[float, float, float]
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    event: str = "speech"  # cough | speech | singing
    count: int = 100
    # lognormal parameters, or an explicit list of diameters
    geometric_mean_m: float = 10e-6
    geometric_sigma: float = 1.6
    diameters_m: tuple[float, ...] | None = None
    speed_m_per_s: float = 1.0
    spread_deg: float = 15.0
    temperature_K: float = 308.0
    period_s: float | None = None  # repeat cadence for continuous speech
    start_s: float = 0.0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("emission count must be >= 1")
        if self.diameters_m is not None:
            if any(di < NUCLEATION_DIAMETER_M for di in self.diameters_m):
                raise ValueError("all initial diameters must be >= the nucleation cutoff")
        elif self.geometric_mean_m < NUCLEATION_DIAMETER_M:
            raise ValueError("geometric mean diameter below the nucleation cutoff")


def sample_event(spec: EmissionSpec, seed: int, event_index: int, rho_d: float):
    """Deterministic particle batch for one event.

    Returns dict of columns (without ids).  The RNG key is (seed, event
    index), so resumed runs reproduce later events bitwise.
    """
    rng = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, event_index]))
    n = spec.count
    if spec.diameters_m is not None:
        reps = int(np.ceil(n / len(spec.diameters_m)))
        d = np.tile(np.asarray(spec.diameters_m, dtype=float), reps)[:n]
    else:
        mu = np.log(spec.geometric_mean_m)
        sg = np.log(spec.geometric_sigma)
        d = np.exp(rng.normal(mu, sg, size=n))
        # truncate-resample below the nucleation cutoff
        for _ in range(100):
            low = d < NUCLEATION_DIAMETER_M
            if not low.any():
                break
            d[low] = np.exp(rng.normal(mu, sg, size=int(low.sum())))
        d = np.maximum(d, NUCLEATION_DIAMETER_M)

    axis = np.asarray(spec.direction, dtype=float)
    axis = axis / np.linalg.norm(axis)
    sigma = np.deg2rad(spec.spread_deg)
    perturb = rng.normal(0.0, sigma, size=(n, 2))
    # orthonormal frame around the emission axis
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(axis, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(axis, t1)
    dirs = axis[None, :] + perturb[:, :1] * t1[None, :] + perturb[:, 1:] * t2[None, :]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vel = spec.speed_m_per_s * dirs
    pos = np.tile(np.asarray(spec.source_m, dtype=float), (n, 1))
    m = rho_d * np.pi * d**3 / 6.0
    return {
        "pos": pos,
        "vel": vel,
        "d": d.copy(),
        "T": np.full(n, spec.temperature_K),
        "m": m,
        "d0": d.copy(),
        "nucleated": np.zeros(n, dtype=bool),
    }
