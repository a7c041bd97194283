"""Breathing-zone virion exposure from particle snapshot histories.

The virion count in the zone is the product of the viral load and the
ejection-time volume v_d0 of each droplet currently inside the box (droplet
nuclei keep their full ejection volume: the nonvolatile payload does not
evaporate).  N = (B rho_v / v_B) * integral of the in-zone ejection volume
over the exposure window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..droplets.particles import AIRBORNE, NUCLEATED


@dataclass(frozen=True)
class BreathingZone:
    """Axis-aligned box in front of and below a subject's nose."""

    lo_m: tuple[float, float, float]
    hi_m: tuple[float, float, float]
    subject: str = ""

    def __post_init__(self):
        lo = np.asarray(self.lo_m)
        hi = np.asarray(self.hi_m)
        if np.any(hi <= lo):
            raise ValueError("breathing zone box is degenerate")

    @property
    def volume_m3(self) -> float:
        lo = np.asarray(self.lo_m)
        hi = np.asarray(self.hi_m)
        return float(np.prod(hi - lo))

    def contains(self, pos: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo_m)
        hi = np.asarray(self.hi_m)
        return np.all((pos >= lo) & (pos < hi), axis=1)

    @classmethod
    def at_nose(cls, nose_m, size_m=(0.20, 0.20, 0.15), forward=(1.0, 0.0, 0.0), subject=""):
        """Zone anchored at the nose: (depth, width, height) extends along
        the dominant horizontal forward direction and downward."""
        nose = np.asarray(nose_m, dtype=float)
        f = np.asarray(forward, dtype=float)
        depth, width, height = size_m
        lo = np.empty(3)
        hi = np.empty(3)
        ax = 0 if abs(f[0]) >= abs(f[1]) else 1
        t = 1 - ax
        if f[ax] >= 0:
            lo[ax], hi[ax] = nose[ax], nose[ax] + depth
        else:
            lo[ax], hi[ax] = nose[ax] - depth, nose[ax]
        lo[t], hi[t] = nose[t] - width / 2.0, nose[t] + width / 2.0
        lo[2], hi[2] = nose[2] - height, nose[2]
        return cls(tuple(lo), tuple(hi), subject)


@dataclass
class ExposureRecord:
    zone: BreathingZone
    times_s: np.ndarray
    volume_in_zone_m3: np.ndarray  # instantaneous ejection-volume sum v_d0(t)
    duration_s: float
    breathing_rate_m3_s: float
    viral_load_per_m3: float

    def virion_count(self, quasi_steady: bool = False) -> float:
        B = self.breathing_rate_m3_s
        rho_v = self.viral_load_per_m3
        vB = self.zone.volume_m3
        if quasi_steady:
            vbar = float(self.volume_in_zone_m3.mean())
            return B * rho_v / vB * vbar * self.duration_s
        integral = float(np.trapezoid(self.volume_in_zone_m3, self.times_s))
        return B * rho_v / vB * integral

    def virion_timeseries(self) -> np.ndarray:
        """n(t): instantaneous virion count inside the zone."""
        return self.viral_load_per_m3 * self.volume_in_zone_m3


class SamplingGapError(ValueError):
    pass


def zone_exposure(
    snapshots: list[tuple[float, dict]],
    zone: BreathingZone,
    window_s: tuple[float, float],
    breathing_rate_m3_s: float,
    viral_load_per_m3: float,
) -> ExposureRecord:
    """Integrate in-zone ejection volume over snapshots covering the window.

    snapshots: (time, arrays) pairs as produced by ParticleSets.snapshot();
    only AIRBORNE/NUCLEATED droplets count.  Snapshot spacing must never
    exceed twice the median cadence, otherwise the integral is untrustworthy.
    """
    t0, t1 = window_s
    sel = [(t, s) for t, s in snapshots if t0 - 1e-12 <= t <= t1 + 1e-12]
    if len(sel) < 2:
        raise SamplingGapError("need at least two particle snapshots in the window")
    times = np.array([t for t, _ in sel])
    order = np.argsort(times)
    times = times[order]
    gaps = np.diff(times)
    if len(gaps) and gaps.max() > 2.0 * np.median(gaps) + 1e-12:
        raise SamplingGapError(
            f"snapshot gap {gaps.max():.3g}s exceeds twice the cadence {np.median(gaps):.3g}s"
        )
    vols = np.empty(len(sel))
    for i, k in enumerate(order):
        _, snap = sel[k]
        live = (snap["status"] == AIRBORNE) | (snap["status"] == NUCLEATED)
        inside = live & zone.contains(snap["pos"])
        v0 = np.pi * snap["d0"] ** 3 / 6.0
        vols[i] = float(v0[inside].sum())
    return ExposureRecord(
        zone=zone,
        times_s=times,
        volume_in_zone_m3=vols,
        duration_s=float(times[-1] - times[0]),
        breathing_rate_m3_s=breathing_rate_m3_s,
        viral_load_per_m3=viral_load_per_m3,
    )
