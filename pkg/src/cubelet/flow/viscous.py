"""Second-order central viscous, heat-conduction and species-diffusion
fluxes on cell faces."""

from __future__ import annotations

import numpy as np

from .. import vars as V
from .gas import GasModel


def viscous_face_flux(Wv: np.ndarray, gas: GasModel, axis: int, H: int, dims, h):
    """Viscous flux on interior faces along the (moveaxis) last axis.

    Wv: padded primitives in a view with the flux axis last and the two
    transverse axes in their original relative order: (nc, nv, T1, T2, X).
    dims: (n_t1, n_t2, n_axis) interior cell counts in that order.  Normal
    derivatives are two-point face differences, transverse ones the average
    of the adjacent cells' central differences.  Returns a face array in the
    conservative flux layout (mass row zero); subtract from the inviscid flux.
    """
    nt1, nt2, n = dims
    Ls = slice(H - 1, H + n)  # cells left of each of the n+1 faces
    Rs = slice(H, H + n + 1)

    def cell(var, o1=0, o2=0, side="L"):
        s = Ls if side == "L" else Rs
        return Wv[:, var, H + o1 : H + o1 + nt1, H + o2 : H + o2 + nt2, s]

    inv_h = 1.0 / h

    Tf = 0.5 * (cell(V.T, side="L") + cell(V.T, side="R"))
    mu = gas.mu(Tf)
    kth = mu * gas.cp / gas.prandtl

    def face_grad(var, view_t):
        """d(var)/d(view axis t) at faces; t = 2 is the face normal."""
        if view_t == 2:
            return (cell(var, side="R") - cell(var, side="L")) * inv_h
        o1, o2 = (1, 0) if view_t == 0 else (0, 1)
        return (
            0.25
            * inv_h
            * (
                cell(var, o1, o2, "L")
                - cell(var, -o1, -o2, "L")
                + cell(var, o1, o2, "R")
                - cell(var, -o1, -o2, "R")
            )
        )

    # velocity gradient du[c][t] = d u_c / d x_t in view-axis ordering
    du = [[face_grad(V.UX + c, t) for t in range(3)] for c in range(3)]

    trans = [a for a in range(3) if a != axis]
    view_of_phys = {trans[0]: 0, trans[1]: 1, axis: 2}
    div = sum(du[p][view_of_phys[p]] for p in range(3))

    out = np.zeros(Wv.shape[:2] + Tf.shape[-3:], dtype=Wv.dtype)
    tau_col = {}
    for c in range(3):
        val = mu * (du[c][2] + du[axis][view_of_phys[c]])
        if c == axis:
            val -= (2.0 / 3.0) * mu * div
        tau_col[c] = val
        out[:, V.MX + c] = val

    uf = [0.5 * (cell(V.UX + c, side="L") + cell(V.UX + c, side="R")) for c in range(3)]
    out[:, V.EN] = sum(tau_col[c] * uf[c] for c in range(3)) + kth * face_grad(V.T, 2)

    for k in range(gas.n_species):
        var = V.Y0 + k
        out[:, var] = (mu / gas.schmidt[k]) * face_grad(var, 2)
    return out
