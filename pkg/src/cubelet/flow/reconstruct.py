"""Upwind-biased face reconstruction from cell averages.

Orders 1, 2 and 5 on uniform spacing.  Order 2 is the fully upwind
kappa = -1 scheme with optional slope limiting; order 5 is the classic
five-point upwind-biased reconstruction, exact for quartics from cell
averages.  Where the five-point stencil would leave the padded array the
faces fall back to order 2 (and order 1 at the outermost face if needed),
so callers never need more than 2 halo layers for order <= 2 and get
automatic local order reduction at order 5.
"""

from __future__ import annotations

import numpy as np

_C5_L = np.array([2.0, -13.0, 47.0, 27.0, -3.0]) / 60.0


def _limited_slope(dm: np.ndarray, dp: np.ndarray, limiter: str) -> np.ndarray:
    """Limited one-sided slope phi(r) * dm for the kappa = -1 scheme."""
    if limiter == "none":
        return dm
    if limiter == "minmod":
        s = np.sign(dm)
        return s * np.maximum(0.0, np.minimum(np.abs(dm), s * dp))
    if limiter == "vanalbada":
        eps = 1e-300
        num = dp * dm * (dp + dm)
        den = dp * dp + dm * dm + eps
        out = num / den
        return np.where(dp * dm > 0.0, out, 0.0)
    raise ValueError(f"unknown limiter {limiter}")


def face_states_axis(q: np.ndarray, H: int, n: int, order: int, limiter: str):
    """Left/right states on the n+1 interior faces along the LAST axis.

    q: (..., X) padded cell data with X = n + 2H.  Returns (qL, qR) shaped
    (..., n+1) for faces f = H .. H+n in array coordinates.
    """
    X = q.shape[-1]
    assert X == n + 2 * H
    f0, f1 = H, H + n  # face index range (inclusive)

    if order == 1 or H < 1:
        qL = q[..., f0 - 1 : f1]
        qR = q[..., f0 : f1 + 1]
        return qL.copy(), qR.copy()

    # order 2 (kappa = -1 upwind) everywhere the 2-cell stencil fits
    qL = np.empty(q.shape[:-1] + (n + 1,), dtype=q.dtype)
    qR = np.empty_like(qL)
    i = np.arange(f0, f1 + 1)  # face f sits between cells f-1 and f
    c = q[..., f0 - 1 : f1]  # cell left of each face
    cm = q[..., f0 - 2 : f1 - 1]
    cp = q[..., f0 : f1 + 1]
    qL[...] = c + 0.5 * _limited_slope(c - cm, cp - c, limiter)
    d = q[..., f0 : f1 + 1]  # cell right of each face
    dp = q[..., f0 + 1 : f1 + 2]
    dm = q[..., f0 - 1 : f1]
    qR[...] = d - 0.5 * _limited_slope(dp - d, d - dm, limiter)

    if order >= 5:
        # faces with the full 5-point stencils available
        lo = max(f0, 3)
        hi = min(f1, X - 3)
        if hi >= lo:
            sl = slice(lo - f0, hi - f0 + 1)
            acc = None
            for t, cf in enumerate(_C5_L):
                term = cf * q[..., lo - 3 + t : hi - 3 + t + 1]
                acc = term if acc is None else acc + term
            qL[..., sl] = acc
            acc = None
            for t, cf in enumerate(_C5_L[::-1]):
                term = cf * q[..., lo - 2 + t : hi - 2 + t + 1]
                acc = term if acc is None else acc + term
            qR[..., sl] = acc
            if limiter != "none":
                lo_b = np.minimum(q[..., lo - 1 : hi], q[..., lo : hi + 1])
                hi_b = np.maximum(q[..., lo - 1 : hi], q[..., lo : hi + 1])
                qL[..., sl] = np.clip(qL[..., sl], lo_b, hi_b)
                qR[..., sl] = np.clip(qR[..., sl], lo_b, hi_b)
    return qL, qR
