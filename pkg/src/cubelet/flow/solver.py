"""Implicit dual-time-stepping solver.

Each physical step (BDF2; backward Euler on the very first step) is
converged by pseudo-time inner iterations: one forward plus one backward
symmetric Gauss-Seidel sweep along i+j+k hyperplanes inside every block,
with Jacobi-lagged coupling across block interfaces through the halos.  The
flow variables converge first with frozen species; species transport then
runs its own decoupled inner loop on the frozen face mass fluxes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import vars as V
from ..ibm import IbmMask, WallCondition, apply_ibm
from ..pool import WorkerPool
from .domain import Domain
from .flux import analytic_flux, roe_flux, spectral_radius
from .gas import GasModel, conservative_from_primitives, primitives_from_conservative
from .reconstruct import face_states_axis
from .viscous import viscous_face_flux


class SolverDivergence(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class InnerSettings:
    order: int = 2
    limiter: str = "vanalbada"
    preconditioned: bool = True
    eps_mach: float = 1e-3
    pseudo_cfl: float = 20.0
    tolerance: float = 1e-3
    abs_tolerance: float = 1e-13  # on norm * dt (state change per iteration)
    max_inner: int = 30
    n_divergence: int = 10
    entropy_fix: float = 0.05
    on_nonconverged: str = "accept"  # accept | raise
    viscous: bool = True
    # Weiss-Smith style unsteady reference-velocity floor h/(pi dt); without
    # it the preconditioned dissipation is unstable on resolved acoustics
    unsteady_floor: bool = True
    # Rebuild U^{n+1} in exact flux form from the converged state's fluxes.
    # For the flow system this is an explicit evaluation and is only safe
    # when the physical step resolves acoustics and the inner loop is tight,
    # so it is opt-in; the species system is linear in the frozen mass flux
    # and keeps its reconstitution on so evaporation bookkeeping is exact.
    conservative_finish_flow: bool = False
    conservative_finish_species: bool = True


@dataclass
class StepStats:
    step: int
    time: float
    inner_iterations: int = 0
    first_residual: float = 0.0
    last_residual: float = 0.0
    species_iterations: int = 0
    converged: bool = True
    clamped_cells: int = 0
    mass_total: float = 0.0


def _plane_templates(nx, ny, nz, H):
    """Padded flat indices of interior cells grouped by i+j+k hyperplane."""
    X, Y, Z = nx + 2 * H, ny + 2 * H, nz + 2 * H
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    flat = ((i + H) * Y + (j + H)) * Z + (k + H)
    p = (i + j + k).ravel()
    flat = flat.ravel()
    order = np.argsort(p, kind="stable")
    p_sorted = p[order]
    flat_sorted = flat[order]
    bounds = np.searchsorted(p_sorted, np.arange(nx + ny + nz - 2 + 1))
    planes = [flat_sorted[bounds[q] : bounds[q + 1]] for q in range(nx + ny + nz - 2)]
    strides = (Y * Z, Z, 1)
    return planes, strides


class FlowSolver:
    def __init__(
        self,
        domain: Domain,
        gas: GasModel,
        dt: float,
        settings: InnerSettings | None = None,
        mask: IbmMask | None = None,
        wall_table: list[WallCondition] | None = None,
        n_workers: int = 1,
    ):
        self.dom = domain
        self.gas = gas
        self.dt = float(dt)
        self.set = settings or InnerSettings()
        self.mask = mask
        self.wall_table = wall_table or [WallCondition()]
        nv = V.n_vars(gas.n_species)
        self.nv = nv
        self.W = domain.alloc(nv)
        self.U = domain.alloc(nv)
        self.Un = np.zeros_like(self.U)
        self.Unm1 = np.zeros_like(self.U)
        self.sources = np.zeros((domain.nc, nv) + tuple(domain.interior_shape[1:]))
        self.step_index = 0
        self.time = 0.0
        self.pool = WorkerPool(n_workers, domain.nc)
        self.timers: dict[str, float] = {}
        self.planes, self.strides = _plane_templates(domain.nx, domain.ny, domain.nz, domain.H)
        Yp, Zp = domain.ny + 2 * domain.H, domain.nz + 2 * domain.H
        self.plane_interior = []
        self._nb3 = {1: [], -1: []}  # concatenated 3-axis neighbour indices
        self._axm = []  # per-plane (3, 3m) axis selector masks as floats
        xyz = int(np.prod(domain.padded_shape))
        self._xyz = xyz
        for p in self.planes:
            i = p // (Yp * Zp) - domain.H
            j = (p % (Yp * Zp)) // Zp - domain.H
            k = p % Zp - domain.H
            self.plane_interior.append((i * domain.ny + j) * domain.nz + k)
            m = len(p)
            seg = np.concatenate([np.full(m, 0), np.full(m, 1), np.full(m, 2)])
            self._axm.append(np.stack([(seg == a).astype(float) for a in range(3)]))
            self._segoff = getattr(self, "_segoff", [])
            self._segoff.append(seg * xyz)
            for d in (1, -1):
                nb = np.concatenate([p - d * self.strides[a] for a in range(3)])
                self._nb3[d].append(nb)
        self._h5 = domain.h.reshape(-1, 1, 1, 1, 1)
        self._h4 = domain.h.reshape(-1, 1, 1, 1)
        self._uref_floor = (
            (domain.h / (np.pi * self.dt)) if self.set.unsteady_floor else np.zeros(domain.nc)
        )
        if mask is not None:
            self._fluid = mask.fluid_interior()
            self._fluid_padded = mask.cells <= 1
            self._bad_face = self._order_reduction_masks()
        else:
            self._fluid = None
            self._fluid_padded = None
            self._bad_face = [None, None, None]
        self._wall_faces = {
            (ax, side): domain.wall_face_masks(ax, side) for ax in range(3) for side in (0, 1)
        }
        self._scales = None
        self._mass_flux = [None, None, None]

    # ------------------------------------------------------------------ setup
    def set_state(self, fn_or_values) -> None:
        """Initialise primitives from a callable fn(x, y, z) -> (nv,) values
        broadcast over cell centres, or a constant vector."""
        H = self.dom.H
        for b in range(self.dom.nc):
            xs, ys, zs = self.dom.cell_centers(b)
            X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
            if callable(fn_or_values):
                vals = fn_or_values(X, Y, Z)
            else:
                vals = [np.broadcast_to(v, X.shape) for v in fn_or_values]
            for ivar in range(self.nv):
                self.dom.interior(self.W)[b, ivar] = vals[ivar]
        self._sync()
        conservative_from_primitives(self.W, self.gas, out=self.U)
        self.Un[...] = self.U
        self.Unm1[...] = self.U
        Ui = self.dom.interior(self.U)
        scales = np.abs(Ui).mean(axis=(0, 2, 3, 4))
        # velocity and species scales from acoustic/mass references so that
        # quiescent or species-free starts still give meaningful norms
        c_ref = float(self.gas.sound_speed(self.dom.interior(self.W)[:, V.T]).mean())
        rho_ref = max(scales[V.RHO], 1e-30)
        for c in range(3):
            scales[V.MX + c] = max(scales[V.MX + c], rho_ref * c_ref)
        scales[V.EN] = max(scales[V.EN], rho_ref * c_ref * c_ref)
        scales[V.Y0 :] = np.maximum(scales[V.Y0 :], 1e-3 * rho_ref)
        self._scales = scales.reshape(1, -1, 1, 1, 1)

    # ------------------------------------------------------------- sync phase
    def _tick(self, key, t0):
        t1 = time.perf_counter()
        self.timers[key] = self.timers.get(key, 0.0) + (t1 - t0)
        return t1

    def _sync(self):
        t0 = time.perf_counter()
        self.dom.exchange(self.W)
        t0 = self._tick("halo", t0)
        self.dom.apply_bcs(self.W)
        if self.mask is not None:
            apply_ibm(self.mask, self.W, self.wall_table)
            # ghost reconstruction changed interior cells: refresh their halo
            # copies so the synced state is a pure function of the interiors
            self.dom.exchange(self.W)
            self.dom.apply_bcs(self.W)
        self._tick("bc_ibm", t0)

    # ------------------------------------------------------ spatial residual
    def _order_reduction_masks(self):
        """Per-axis face flags where reconstruction must drop to first order
        because the wide stencil would read non-fluid (deep solid) cells."""
        out = []
        H = self.dom.H
        ok = self._fluid_padded  # fluid or near-wall; ghosts excluded
        usable = ok | (self.mask.cells == 2)  # ghost values are valid data
        for ax in range(3):
            n = (self.dom.nx, self.dom.ny, self.dom.nz)[ax]
            v = np.moveaxis(usable, 1 + ax, 3)
            t1, t2 = [a for a in range(3) if a != ax]
            nt1 = (self.dom.nx, self.dom.ny, self.dom.nz)[t1]
            nt2 = (self.dom.nx, self.dom.ny, self.dom.nz)[t2]
            vt = v[:, H : H + nt1, H : H + nt2, :]
            width = 3 if self.set.order >= 5 else (2 if self.set.order >= 2 else 1)
            bad = np.zeros(vt.shape[:-1] + (n + 1,), dtype=bool)
            for off in range(-width, width):
                cells = vt[..., H + off : H + off + n + 1]
                bad |= ~cells
            out.append(bad if bad.any() else None)
        return out

    def residual(self, store_mass: bool = False) -> np.ndarray:
        if not hasattr(self, "_res"):
            self._res = np.zeros((self.dom.nc, self.nv) + tuple(self.dom.interior_shape[1:]))
        if store_mass:
            dims = (self.dom.nx, self.dom.ny, self.dom.nz)
            for ax in range(3):
                t1, t2 = [a for a in range(3) if a != ax]
                shape = (self.dom.nc, dims[t1], dims[t2], dims[ax] + 1)
                if self._mass_flux[ax] is None or self._mass_flux[ax].shape != shape:
                    self._mass_flux[ax] = np.zeros(shape)
        self.pool.run(self._residual_slab, self._res, store_mass)
        return self._res

    def _residual_slab(self, bsl: slice, res: np.ndarray, store_mass: bool):
        """Accumulate -div F + S on interior cells for blocks in bsl."""
        dom, gas, st = self.dom, self.gas, self.set
        timed = self.pool.n_workers == 1
        H = dom.H
        dims = (dom.nx, dom.ny, dom.nz)
        W = self.W[bsl]
        h5 = self._h5[bsl]
        res_b = res[bsl]
        res_b[...] = 0.0
        for ax in range(3):
            t0 = time.perf_counter()
            n = dims[ax]
            t1, t2 = [a for a in range(3) if a != ax]
            nt1, nt2 = dims[t1], dims[t2]
            Wv = np.moveaxis(W, 2 + ax, 4)
            Wt = Wv[:, :, H : H + nt1, H : H + nt2, :]
            qL, qR = face_states_axis(Wt, H, n, st.order, st.limiter)
            bad = self._bad_face[ax]
            if bad is not None:
                b = bad[bsl][:, None]
                qL = np.where(b, Wt[..., H - 1 : H + n], qL)
                qR = np.where(b, Wt[..., H : H + n + 1], qR)
            F = roe_flux(
                qL,
                qR,
                gas,
                ax,
                preconditioned=st.preconditioned,
                eps_mach=st.eps_mach,
                fix_coeff=st.entropy_fix,
                uref_floor=self._uref_floor[bsl].reshape(-1, 1, 1, 1),
            )
            # exact wall flux on wall-like domain faces: no mass/energy leak
            for side in (0, 1):
                wf = self._wall_faces[(ax, side)]
                if wf is None:
                    continue
                ids, mask2 = wf
                sel = (ids >= bsl.start) & (ids < bsl.stop)
                if not sel.any():
                    continue
                ids_l = ids[sel] - bsl.start
                m2 = mask2[sel]
                fi = 0 if side == 0 else n
                pf = (qR if side == 0 else qL)[ids_l, V.P, :, :, fi]
                sub = F[ids_l, :, :, :, fi]
                wall = np.zeros_like(sub)
                wall[:, V.MX + ax] = pf
                F[ids_l, :, :, :, fi] = np.where(m2[:, None], wall, sub)
            if timed:
                t0 = self._tick("convective", t0)
            if store_mass:
                self._mass_flux[ax][bsl] = F[:, V.RHO]
            if st.viscous:
                F -= viscous_face_flux(Wv, gas, ax, H, (nt1, nt2, n), self._h4[bsl])
                if timed:
                    t0 = self._tick("viscous", t0)
            rv = np.moveaxis(res_b, 2 + ax, 4)
            rv -= (F[..., 1:] - F[..., :-1]) / h5
        # sources: buoyancy on momentum/energy plus external species sources
        gvec = gas.gravity
        if any(gvec):
            rho = dom.interior(self.U[bsl])[:, V.RHO]
            drho = rho - gas.rho0
            gu = 0.0
            for c in range(3):
                if gvec[c]:
                    res_b[:, V.MX + c] += drho * gvec[c]
                    gu = gu + gvec[c] * dom.interior(self.W[bsl])[:, V.UX + c]
            res_b[:, V.EN] += drho * gu
        res_b += self.sources[bsl]
        if self._fluid is not None:
            res_b *= self._fluid[bsl][:, None]
        return None

    # -------------------------------------------------------- inner iteration
    def _bdf_coeffs(self):
        if self.step_index == 0:
            return 1.0, -1.0, 0.0
        return 1.5, -2.0, 0.5

    def _time_residual(self, res):
        a0, a1, a2 = self._bdf_coeffs()
        Ui = self.dom.interior(self.U)
        Uni = self.dom.interior(self.Un)
        Umi = self.dom.interior(self.Unm1)
        res[:, : V.N_GAS] -= (
            a0 * Ui[:, : V.N_GAS] + a1 * Uni[:, : V.N_GAS] + a2 * Umi[:, : V.N_GAS]
        ) / self.dt
        if self._fluid is not None:
            res[:, : V.N_GAS] *= self._fluid[:, None]

    def _norm(self, res, vars_slice=slice(0, V.N_GAS)) -> float:
        r = res[:, vars_slice] / self._scales[:, vars_slice]
        return float(np.sqrt(np.mean(r * r)))

    def _sigma_cache(self):
        """Per-cell convective+viscous spectral radii and derived factors."""
        gas, st = self.gas, self.set
        W = self.W
        T = W[:, V.T]
        P = W[:, V.P]
        rho = P / (gas.R * T)
        mu = gas.mu(T)
        nu = mu / rho
        nu_eff = nu * max(4.0 / 3.0, gas.gamma / gas.prandtl)
        c = gas.sound_speed(T)
        ke2 = W[:, V.UX] ** 2 + W[:, V.UY] ** 2 + W[:, V.UZ] ** 2
        if st.preconditioned:
            floor = self._uref_floor.reshape(-1, 1, 1, 1)
            Ur = np.maximum(np.maximum(np.sqrt(ke2), st.eps_mach * c), floor)
            Ur = np.minimum(Ur, c)
        else:
            Ur = c
        self._Ur2 = Ur * Ur
        h = self._h4
        self._sig = []
        for ax in range(3):
            un = W[:, V.UX + ax]
            a = self._Ur2 / (c * c)
            alpha = 0.5 * (1.0 - a)
            cp = np.sqrt(alpha * alpha * un * un + a * c * c)
            sig = np.abs(un * (1.0 - alpha)) + cp + 2.0 * nu_eff / h
            self._sig.append(sig)
        self._sigsum = (self._sig[0] + self._sig[1] + self._sig[2]) / h
        self._sigcat = np.concatenate([s.reshape(s.shape[0], -1) for s in self._sig], axis=1)

    def _gather(self, arr, bsl, idx):
        """arr (nc, nv, X, Y, Z) -> (nb, nv, m) at padded flat idx."""
        flat = arr[bsl].reshape(arr[bsl].shape[0], arr.shape[1], -1)
        return flat[:, :, idx]

    def _gamma_mul(self, Wc, dWc, Ur2):
        """Gamma(Wc) @ dWc for gathered cell states (nb, nv, m), flow rows."""
        gas = self.gas
        P, T = Wc[:, V.P], Wc[:, V.T]
        rho = P / (gas.R * T)
        c2 = gas.gamma * gas.R * T
        theta = 1.0 / Ur2 + (gas.gamma - 1.0) / c2
        rhoT = -rho / T
        ke = 0.5 * (Wc[:, V.UX] ** 2 + Wc[:, V.UY] ** 2 + Wc[:, V.UZ] ** 2)
        Hh = gas.cp * T + ke
        dP, dT = dWc[:, V.P], dWc[:, V.T]
        out = np.empty_like(dWc)
        drho = theta * dP + rhoT * dT
        out[:, V.RHO] = drho
        udu = 0.0
        for c in range(3):
            out[:, V.MX + c] = Wc[:, V.UX + c] * drho + rho * dWc[:, V.UX + c]
            udu = udu + Wc[:, V.UX + c] * dWc[:, V.UX + c]
        out[:, V.EN] = (theta * Hh - 1.0) * dP + rho * udu + (rhoT * Hh + rho * gas.cp) * dT
        return out

    def _dinv(self, Wc, Ur2, ssum, rhs):
        """Apply D^-1 for the flow system; rhs is conservative-space (nb,5,m)."""
        gas, st = self.gas, self.set
        g = gas.gamma
        P, T = Wc[:, V.P], Wc[:, V.T]
        rho = P / (gas.R * T)
        c2 = g * gas.R * T
        u = Wc[:, V.UX : V.UX + 3]
        ke = 0.5 * (u[:, 0] ** 2 + u[:, 1] ** 2 + u[:, 2] ** 2)
        # M^-1 rhs -> primitive increments
        dr = rhs[:, V.RHO]
        dm = rhs[:, V.MX : V.MX + 3]
        dE = rhs[:, V.EN]
        du = (dm - u * dr[:, None]) / rho[:, None]
        udm = u[:, 0] * dm[:, 0] + u[:, 1] * dm[:, 1] + u[:, 2] * dm[:, 2]
        dP = (g - 1.0) * (dE - udm + ke * dr)
        dT = (dP - gas.R * T * dr) / (rho * gas.R)
        # Gamma^-1 rhs via rank-one correction
        coef = (c2 - Ur2) / (c2 * c2)
        sP = dP.copy()
        dP = dP - coef * sP * c2
        dT = dT - coef * sP * gas.R * T / (rho * gas.cv)
        # G^-1 (Sherman-Morrison on beta I + cw w e1^T)
        a0, _, _ = self._bdf_coeffs()
        cw = a0 / self.dt
        beta = ssum * (1.0 + 1.0 / st.pseudo_cfl) + cw
        aa = Ur2 / c2
        wP = aa - 1.0
        wT = (aa - 1.0) / (rho * gas.cp)
        corr = cw * dP / (beta * (beta + cw * wP))
        out = np.empty_like(rhs)
        out[:, V.P] = dP / beta - corr * wP
        out[:, V.UX : V.UX + 3] = du / beta[:, None]
        out[:, V.T] = dT / beta - corr * wT
        return out

    def _flux_multi(self, Wc, axm):
        """Analytic flux for gathered cells whose flux axis varies by
        position: Wc (nb, >=5, 3m), axm (3, 3m) one-hot axis masks."""
        gas = self.gas
        P, T = Wc[:, V.P], Wc[:, V.T]
        rho = P / (gas.R * T)
        ux, uy, uz = Wc[:, V.UX], Wc[:, V.UY], Wc[:, V.UZ]
        un = axm[0] * ux + axm[1] * uy + axm[2] * uz
        m = rho * un
        out = np.empty((Wc.shape[0], V.N_GAS, Wc.shape[2]))
        out[:, V.RHO] = m
        out[:, V.MX] = m * ux + P * axm[0]
        out[:, V.MY] = m * uy + P * axm[1]
        out[:, V.MZ] = m * uz + P * axm[2]
        rhoe = P / (gas.gamma - 1.0) + 0.5 * rho * (ux * ux + uy * uy + uz * uz)
        out[:, V.EN] = (rhoe + P) * un
        return out

    def _sweep(self, bsl: slice, res):
        """Forward+backward hyperplane Gauss-Seidel; returns dW (padded)."""
        nf = V.N_GAS
        dom = self.dom
        Wb = self.W[bsl]
        nb = Wb.shape[0]
        dW = np.zeros((nb, nf, self._xyz))
        Wf = Wb.reshape(nb, self.nv, -1)
        resf = res[bsl].reshape(nb, self.nv, -1)
        h2 = (2.0 * dom.h[bsl]).reshape(-1, 1, 1)
        sigcat = self._sigcat[bsl]
        ssum = self._sigsum[bsl].reshape(nb, -1)
        Ur2f = self._Ur2[bsl].reshape(nb, -1)
        fluid = (
            self._fluid_padded[bsl].reshape(nb, -1)
            if self._fluid_padded is not None
            else None
        )
        nplanes = len(self.planes)

        for direction in (1, -1):
            order = range(nplanes) if direction == 1 else range(nplanes - 1, -1, -1)
            for q in order:
                p = self.planes[q]
                pint = self.plane_interior[q]
                m = len(p)
                if direction == 1:
                    rhs = resf[:, :nf, pint].copy()
                else:
                    rhs = np.zeros((nb, nf, m))
                nb3 = self._nb3[direction][q]
                dWn = dW[:, :, nb3]
                if dWn.any():
                    axm = self._axm[q]
                    Wn = Wf[:, :nf, nb3]
                    Wn2 = Wn + dWn
                    dF = self._flux_multi(Wn2, axm) - self._flux_multi(Wn, axm)
                    gdw = self._gamma_mul(Wn, dWn, Ur2f[:, nb3])
                    sg = sigcat[:, nb3 + self._segoff[q]]
                    contrib = (direction * dF + sg[:, None] * gdw) / h2
                    rhs += contrib.reshape(nb, nf, 3, m).sum(axis=2)
                Wc = Wf[:, :, p]
                dWp = self._dinv(Wc, Ur2f[:, p], ssum[:, p], rhs)
                if fluid is not None:
                    dWp *= fluid[:, None, p]
                if direction == 1:
                    dW[:, :, p] = dWp
                else:
                    dW[:, :, p] += dWp
        return dW.reshape((nb, nf) + dom.padded_shape)

    def _apply_update(self, bsl: slice, dW) -> int:
        """W += dW on interior flow variables with a positivity limiter.

        Cells whose pressure or temperature would drop below half their
        current value get the whole increment scaled back so the new value
        lands exactly at that floor; this guarantees positivity.
        """
        dom = self.dom
        Wi = dom.interior(self.W[bsl])
        dWi = dom.interior(dW)
        alpha = np.ones_like(Wi[:, V.P])
        for var in (V.P, V.T):
            d = dWi[:, var]
            lim = np.where(d < 0.0, -0.5 * Wi[:, var] / np.minimum(d, -1e-300), np.inf)
            alpha = np.minimum(alpha, lim)
        clamped = int((alpha < 1.0).sum())
        if clamped:
            dWi = dWi * alpha[:, None]
        Wi[:, : V.N_GAS] += dWi
        conservative_from_primitives(self.W[bsl], self.gas, out=self.U[bsl])
        return clamped

    def inner_iteration(self):
        """One dual-time inner iteration; returns (residual_norm, clamped)."""
        self._sync()
        res = self.residual(store_mass=True)
        self._time_residual(res)
        norm = self._norm(res)
        t0 = time.perf_counter()
        self._sigma_cache()
        dWs = self.pool.run(self._sweep, res)
        if self.pool.n_workers == 1:
            self._tick("lusgs", t0)
        clamped = 0
        for bsl, dW in zip(self.pool.slices, dWs):
            clamped += self._apply_update(bsl, dW)
        return norm, clamped

    # ---------------------------------------------------------------- species
    def _residual_species(self, bsl: slice, res):
        """Advection (frozen mass flux, upwind Y) + Fickian diffusion."""
        dom, gas, st = self.dom, self.gas, self.set
        H = dom.H
        dims = (dom.nx, dom.ny, dom.nz)
        W = self.W[bsl]
        h5 = self._h5[bsl]
        res_b = res[bsl]
        res_b[...] = 0.0
        ns = gas.n_species
        for ax in range(3):
            n = dims[ax]
            t1, t2 = [a for a in range(3) if a != ax]
            nt1, nt2 = dims[t1], dims[t2]
            Wv = np.moveaxis(W, 2 + ax, 4)
            Wt = Wv[:, :, H : H + nt1, H : H + nt2, :]
            Yt = Wt[:, V.Y0 : V.Y0 + ns]
            qL, qR = face_states_axis(Yt, H, n, min(st.order, 2), "minmod")
            bad = self._bad_face[ax]
            if bad is not None:
                b = bad[bsl][:, None]
                qL = np.where(b, Yt[..., H - 1 : H + n], qL)
                qR = np.where(b, Yt[..., H : H + n + 1], qR)
            mdot = self._mass_flux[ax][bsl][:, None]
            Yup = np.where(mdot >= 0.0, qL, qR)
            F = mdot * Yup
            Tf = 0.5 * (Wt[:, V.T : V.T + 1, ..., H - 1 : H + n] + Wt[:, V.T : V.T + 1, ..., H : H + n + 1])
            mu = gas.mu(Tf)
            for k in range(ns):
                dY = (
                    Wt[:, V.Y0 + k, ..., H : H + n + 1] - Wt[:, V.Y0 + k, ..., H - 1 : H + n]
                ) / h5[..., 0]
                F[:, k] -= (mu[:, 0] / gas.schmidt[k]) * dY
            rv = np.moveaxis(res_b, 2 + ax, 4)
            rv[:, V.Y0 :] -= (F[..., 1:] - F[..., :-1]) / h5
        res_b[:, V.Y0 :] += self.sources[bsl][:, V.Y0 :]
        a0, a1, a2 = self._bdf_coeffs()
        Ui = dom.interior(self.U[bsl])[:, V.Y0 :]
        Uni = dom.interior(self.Un[bsl])[:, V.Y0 :]
        Umi = dom.interior(self.Unm1[bsl])[:, V.Y0 :]
        res_b[:, V.Y0 :] -= (a0 * Ui + a1 * Uni + a2 * Umi) / self.dt
        if self._fluid is not None:
            res_b[:, V.Y0 :] *= self._fluid[bsl][:, None]
        return None

    def _sweep_species(self, bsl: slice, res):
        """Scalar LUSGS for each species (increments of rho Y)."""
        dom, gas, st = self.dom, self.gas, self.set
        H = dom.H
        ns = gas.n_species
        Wb = self.W[bsl]
        nb = Wb.shape[0]
        X3 = int(np.prod(dom.padded_shape))
        dQ = np.zeros((nb, ns, X3))
        Wf = Wb.reshape(nb, self.nv, -1)
        resf = res[bsl].reshape(nb, self.nv, -1)
        h = dom.h[bsl].reshape(-1, 1, 1)
        T = Wf[:, V.T]
        rho = Wf[:, V.P] / (gas.R * T)
        nu = gas.mu(T) / rho
        sc_min = min(gas.schmidt)
        sig = [np.abs(Wf[:, V.UX + ax]) + 2.0 * (nu / sc_min) / h[:, 0] for ax in range(3)]
        ssum = (sig[0] + sig[1] + sig[2]) / h[:, 0]
        a0, _, _ = self._bdf_coeffs()
        beta = ssum * (1.0 + 1.0 / st.pseudo_cfl) + a0 / self.dt
        fluid = (
            self._fluid_padded[bsl].reshape(nb, -1)
            if self._fluid_padded is not None
            else None
        )
        for direction in (1, -1):
            planes = self.planes if direction == 1 else self.planes[::-1]
            plane_i = self.plane_interior if direction == 1 else self.plane_interior[::-1]
            for p, pint in zip(planes, plane_i):
                if direction == 1:
                    rhs = resf[:, V.Y0 :, pint].copy()
                else:
                    rhs = np.zeros((nb, ns, len(p)))
                for ax in range(3):
                    nb_idx = p - direction * self.strides[ax]
                    dQn = dQ[:, :, nb_idx]
                    if not dQn.any():
                        continue
                    un = Wf[:, V.UX + ax][:, None, nb_idx]
                    sg = sig[ax][:, None, nb_idx]
                    rhs += (direction * un * dQn + sg * dQn) / (2.0 * h)
                dQp = rhs / beta[:, None, pint]
                if fluid is not None:
                    dQp *= fluid[:, None, p]
                if direction == 1:
                    dQ[:, :, p] = dQp
                else:
                    dQ[:, :, p] += dQp
        return dQ.reshape((nb, ns) + dom.padded_shape)

    def _apply_species_update(self, bsl: slice, dQ):
        dom, gas = self.dom, self.gas
        Ui = dom.interior(self.U[bsl])
        Wi = dom.interior(self.W[bsl])
        Ui[:, V.Y0 :] += dom.interior(dQ)
        rho = Ui[:, V.RHO]
        Wi[:, V.Y0 :] = Ui[:, V.Y0 :] / rho[:, None]

    def species_iteration(self):
        self._sync()
        if not hasattr(self, "_res_s"):
            self._res_s = np.zeros_like(self._res)
        self.pool.run(self._residual_species, self._res_s)
        norm = self._norm(self._res_s, vars_slice=slice(V.Y0, self.nv))
        t0 = time.perf_counter()
        dQs = self.pool.run(self._sweep_species, self._res_s)
        if self.pool.n_workers == 1:
            self._tick("species", t0)
        for bsl, dQ in zip(self.pool.slices, dQs):
            self._apply_species_update(bsl, dQ)
        return norm

    def _finish_flow_conservative(self, stats) -> None:
        """U^{n+1} := (-a1 Un - a2 Unm1 + dt RHS(U_iter)) / a0.

        The iterated state only chooses where the fluxes are evaluated; the
        update itself telescopes in flux form, so closed-box totals are
        conserved to roundoff regardless of the inner tolerance.  Falls back
        to the iterated state if the reconstituted one is non-physical.
        """
        from .gas import NonPhysicalState

        a0, _, a2 = self._bdf_coeffs()
        self._sync()
        res = self.residual(store_mass=True)
        dom = self.dom
        Ui = dom.interior(self.U)
        Uni = dom.interior(self.Un)[:, : V.N_GAS]
        Umi = dom.interior(self.Unm1)[:, : V.N_GAS]
        # incremental form: exact (bitwise) at equilibrium where the history
        # difference and the residual both vanish
        new = Uni + (a2 * (Uni - Umi) + self.dt * res[:, : V.N_GAS]) / a0
        if self._fluid is not None:
            keep = ~self._fluid[:, None]
            new = np.where(keep, Ui[:, : V.N_GAS], new)
        saved = Ui[:, : V.N_GAS].copy()
        Ui[:, : V.N_GAS] = new
        try:
            primitives_from_conservative(self.U, self.gas, out=self.W)
        except NonPhysicalState:
            Ui[:, : V.N_GAS] = saved
            primitives_from_conservative(self.U, self.gas, out=self.W)
            stats.clamped_cells += 1

    def _finish_species_conservative(self) -> None:
        a0, a1, a2 = self._bdf_coeffs()
        self._sync()
        if not hasattr(self, "_res_s"):
            self._res_s = np.zeros_like(self._res)
        self.pool.run(self._residual_species, self._res_s)
        dom = self.dom
        res = self._res_s[:, V.Y0 :]
        Ui_y = dom.interior(self.U)[:, V.Y0 :]
        Uni = dom.interior(self.Un)[:, V.Y0 :]
        Umi = dom.interior(self.Unm1)[:, V.Y0 :]
        # _residual_species already subtracted the bracket; undo it to get
        # the pure flux+source right side, then reconstitute incrementally
        flux_rhs = res + (a0 * Ui_y + a1 * Uni + a2 * Umi) / self.dt
        new = Uni + (a2 * (Uni - Umi) + self.dt * flux_rhs) / a0
        Ui = dom.interior(self.U)
        if self._fluid is not None:
            new = np.where(self._fluid[:, None], new, Ui[:, V.Y0 :])
        Ui[:, V.Y0 :] = new
        rho = Ui[:, V.RHO]
        dom.interior(self.W)[:, V.Y0 :] = Ui[:, V.Y0 :] / rho[:, None]

    # ---------------------------------------------------------------- advance
    def advance(self) -> StepStats:
        """One physical time step of the dual-time scheme."""
        st = self.set
        stats = StepStats(step=self.step_index, time=self.time + self.dt)
        first = None
        prev = None
        growth = 0
        for k in range(st.max_inner):
            norm, clamped = self.inner_iteration()
            stats.clamped_cells += clamped
            stats.inner_iterations = k + 1
            if first is None:
                first = norm
                stats.first_residual = norm
            stats.last_residual = norm
            if norm <= st.tolerance * max(first, 1e-300) or norm * self.dt <= st.abs_tolerance:
                break
            if prev is not None and norm > prev:
                growth += 1
                if growth > st.n_divergence and norm > 10.0 * first:
                    raise SolverDivergence(
                        "inner iterations diverging",
                        {
                            "step": self.step_index,
                            "inner": k,
                            "first_residual": first,
                            "residual": norm,
                        },
                    )
            else:
                growth = 0
            prev = norm
        else:
            stats.converged = False
            if st.on_nonconverged == "raise":
                raise SolverDivergence(
                    "inner iterations failed to converge",
                    {"step": self.step_index, "residual": stats.last_residual},
                )

        if st.conservative_finish_flow:
            self._finish_flow_conservative(stats)

        if self.gas.n_species:
            s_first = None
            for k in range(st.max_inner):
                norm = self.species_iteration()
                stats.species_iterations = k + 1
                if s_first is None:
                    s_first = norm
                if norm <= st.tolerance * max(s_first, 1e-300) or norm * self.dt <= st.abs_tolerance:
                    break
            if st.conservative_finish_species:
                self._finish_species_conservative()

        self.Unm1[...] = self.Un
        self.Un[...] = self.U
        self.step_index += 1
        self.time += self.dt
        vol = self.dom.cell_volumes().reshape(-1, 1, 1, 1)
        stats.mass_total = float((self.dom.interior(self.U)[:, V.RHO] * vol).sum())
        return stats
