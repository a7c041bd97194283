"""Classic well-mixed dose and exponential dose-response models."""

from __future__ import annotations

import numpy as np


def infection_probability(N, N0: float):
    """P(N) = 1 - exp(-N / N0); strictly increasing, in [0, 1)."""
    N = np.asarray(N, dtype=float)
    if np.any(N < 0):
        raise ValueError("virion count N must be non-negative")
    if N0 <= 0:
        raise ValueError("infectious dose N0 must be positive")
    return -np.expm1(-N / N0)


def well_mixed_dose(
    breathing_rate_m3_s: float,
    emission_virions_s: float,
    duration_s: float,
    room_volume_m3: float,
    ventilation_per_s: float,
    literal_form: bool = False,
):
    """Inhaled virions under instantaneous uniform mixing with ventilation.

    Primary form integrates the room balance C' = S/V - lambda C, C(0) = 0,
    N = B * integral(C dt):

        N = (B S / (lambda V)) * [T - (1 - exp(-lambda T)) / lambda]

    literal_form=True instead evaluates the published bracket
    N = (BS/(lambda V)) T {1 - (1/(lambda V)) (1 - e^(-lambda T))}, kept for
    side-by-side comparison (its inner 1/(lambda V) factor is dimensionally
    suspect).
    """
    B, S, T = breathing_rate_m3_s, emission_virions_s, duration_s
    V, lam = room_volume_m3, ventilation_per_s
    if V <= 0 or T < 0 or B < 0 or S < 0 or lam < 0:
        raise ValueError("dose parameters must be non-negative (V > 0)")
    if literal_form:
        if lam == 0:
            raise ValueError("literal form undefined for lambda = 0")
        return (B * S / (lam * V)) * T * (1.0 - (1.0 / (lam * V)) * -np.expm1(-lam * T))
    if lam == 0.0:
        # C grows linearly: N = B S T^2 / (2 V)
        return B * S * T * T / (2.0 * V)
    return (B * S / (lam * V)) * (T + np.expm1(-lam * T) / lam)
