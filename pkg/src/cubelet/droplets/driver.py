"""Per-step droplet transport driver.

Couples one-way to the gas (trilinear interpolation of the local state at
each particle) and two-way through the vapor species source.  Sub-steps are
bounded so no particle crosses more than one cube per sub-step; migration
after every sub-step keeps each particle in the set of the cube that
contains it.  Deposition uses first wall-surface crossing.
"""

from __future__ import annotations

import numpy as np

from .. import vars as V
from ..geom import TriangleIndex, segment_triangle_hits
from ..grid import CubeGrid
from ..ibm import CELL_FLUID, CELL_NEAR_WALL, IbmMask
from .emit import EmissionSpec, sample_event
from .particles import AIRBORNE, DEPOSITED_WALL, EXITED, NUCLEATED, ParticleSets
from .physics import LiquidProps, evaporate, integrate_motion


class EmissionInSolidError(ValueError):
    pass


class DropletTracker:
    def __init__(
        self,
        grid: CubeGrid,
        solver,
        mask: IbmMask | None = None,
        soup=None,
        liquid: LiquidProps | None = None,
        seed: int = 0,
        particle_cfl: float = 0.5,
        evaporation: bool = True,
    ):
        self.grid = grid
        self.solver = solver
        self.mask = mask
        self.liquid = liquid or LiquidProps()
        self.seed = int(seed)
        self.particle_cfl = float(particle_cfl)
        self.evaporation = evaporation
        self.sets = ParticleSets()
        self.time = 0.0
        self._event_counter = 0
        self._tri_index = None
        self._tris = None
        if soup is not None and len(soup):
            self._tris = soup.triangles
            self._tri_index = TriangleIndex(soup.triangles, cell_size=4 * float(grid.spacings.max()))
        # vapor source accumulator in solver layout (interior cells)
        self.vapor_source = self.solver.sources  # alias: write species rows
        self.mass_evaporated_total = 0.0

    # ------------------------------------------------------------------ emit
    def emit(self, spec: EmissionSpec) -> np.ndarray:
        cube = self.grid.locate_cube(spec.source_m)
        if self.mask is not None:
            packed = self.grid.cell_lookup(spec.source_m)
            from ..grid import unpack_cell_index

            cid, i, j, k = unpack_cell_index(packed, self.grid.cells_per_edge)
            cls = self.mask.cells[
                cid,
                self.grid.halo_width + i,
                self.grid.halo_width + j,
                self.grid.halo_width + k,
            ]
            if cls not in (CELL_FLUID, CELL_NEAR_WALL):
                raise EmissionInSolidError(f"emission source {spec.source_m} is inside solid")
        cols = sample_event(spec, self.seed, self._event_counter, self.liquid.density)
        self._event_counter += 1
        n = len(cols["d"])
        cols["id"] = self.sets.allocate_ids(n)
        cols["t_emit"] = np.full(n, self.time)
        self.sets.append(cube, cols)
        self._migrate()  # emitted batch may straddle the source cube
        return cols["id"]

    # ------------------------------------------------------- gas interpolation
    def _gas_at(self, cube: int, pos: np.ndarray) -> dict:
        dom = self.solver.dom
        gas = self.solver.gas
        H = dom.H
        W = self.solver.W[cube]
        h = dom.h[cube]
        origin = dom.origins[cube]
        f = (pos - origin) / h + H - 0.5
        i0 = np.floor(f).astype(np.int64)
        frac = f - i0
        N = W.shape[-1]
        Ny, Nz = W.shape[-2], W.shape[-1]
        Nx = W.shape[-3]
        out = {}
        vals = np.zeros((len(pos), W.shape[0]))
        Wf = W.reshape(W.shape[0], -1)
        for ox in (0, 1):
            for oy in (0, 1):
                for oz in (0, 1):
                    ii = np.clip(i0 + np.array([ox, oy, oz]), 0, [Nx - 1, Ny - 1, Nz - 1])
                    flat = (ii[:, 0] * Ny + ii[:, 1]) * Nz + ii[:, 2]
                    w = (
                        (frac[:, 0] if ox else 1 - frac[:, 0])
                        * (frac[:, 1] if oy else 1 - frac[:, 1])
                        * (frac[:, 2] if oz else 1 - frac[:, 2])
                    )
                    vals += w[:, None] * Wf[:, flat].T
        out["P"] = vals[:, V.P]
        out["u"] = vals[:, V.UX : V.UX + 3]
        out["T"] = vals[:, V.T]
        out["Y"] = vals[:, V.Y0] if gas.n_species else np.zeros(len(pos))
        out["rho"] = out["P"] / (gas.R * out["T"])
        out["mu"] = gas.mu(out["T"])
        return out

    # ------------------------------------------------------------ integration
    def step(self, dt: float) -> dict:
        """Advance all live particles over one flow step of length dt."""
        gas = self.solver.gas
        dom = self.solver.dom
        # particles interpolate from halos too: bring them up to date so the
        # visible gas state is a pure function of the interior fields
        self.solver._sync()
        stats = {"migrations": 0, "deposited": 0, "exited": 0, "evaporated_kg": 0.0, "substeps": 0}
        # sub-step bound: no particle may cross more than one cube
        vmax = 1e-12
        for s in self.sets.by_cube.values():
            if len(s["id"]):
                vmax = max(vmax, float(np.abs(s["vel"]).max()))
        edge_min = float(self.grid.edges.min())
        n_sub = max(1, int(np.ceil(dt * vmax / (self.particle_cfl * edge_min))))
        n_sub = min(n_sub, 1000)
        dt_sub = dt / n_sub
        stats["substeps"] = n_sub

        for _ in range(n_sub):
            for cube in sorted(self.sets.by_cube):
                s = self.sets.by_cube[cube]
                n = len(s["id"])
                if n == 0:
                    continue
                gs = self._gas_at(cube, s["pos"])
                old_pos = s["pos"].copy()
                new_pos, new_vel = integrate_motion(
                    s["pos"], s["vel"], s["d"], gs["u"], gs["rho"], gs["mu"],
                    gas.gravity, dt_sub, self.liquid.density,
                )
                s["pos"] = new_pos
                s["vel"] = new_vel
                if self.evaporation and gas.n_species:
                    live = ~s["nucleated"]
                    if live.any():
                        idx = np.nonzero(live)[0]
                        urel = np.sqrt(((s["vel"][idx] - gs["u"][idx]) ** 2).sum(axis=1))
                        sub_gas = {k: (v[idx] if np.ndim(v) else v) for k, v in gs.items()}
                        sub_gas.pop("u")
                        d, m, T, evap, nuc = evaporate(
                            s["d"][idx], s["m"][idx], s["T"][idx], s["d0"][idx],
                            urel, sub_gas, self.liquid, gas, dt_sub,
                        )
                        s["d"][idx] = d
                        s["m"][idx] = m
                        s["T"][idx] = T
                        s["nucleated"][idx] |= nuc
                        self._deposit_vapor(cube, s["pos"][idx], evap, dt)
                        stats["evaporated_kg"] += float(evap.sum())
                # wall deposition: first surface crossing along the sub-step
                if self._tris is not None:
                    self._deposit_on_walls(cube, old_pos, stats)
            self._migrate(stats)
        self.time += dt
        return stats

    def _deposit_vapor(self, cube: int, pos: np.ndarray, evap_mass: np.ndarray, dt_flow: float):
        """Accumulate S_rhoY = dm/(V dt) into each particle's current cell."""
        dom = self.solver.dom
        h = dom.h[cube]
        n = self.grid.cells_per_edge
        loc = np.floor((pos - dom.origins[cube]) / h).astype(np.int64)
        loc = np.clip(loc, 0, n - 1)
        flat = (loc[:, 0] * n + loc[:, 1]) * n + loc[:, 2]
        src = self.solver.sources[cube, V.Y0].reshape(-1)
        np.add.at(src, flat, evap_mass / (h**3 * dt_flow))
        self.mass_evaporated_total += float(evap_mass.sum())

    def _deposit_on_walls(self, cube: int, old_pos: np.ndarray, stats: dict) -> None:
        s = self.sets.by_cube.get(cube)
        if s is None or not len(s["id"]):
            return
        p0 = old_pos
        p1 = s["pos"]
        lo = np.minimum(p0.min(axis=0), p1.min(axis=0))
        hi = np.maximum(p0.max(axis=0), p1.max(axis=0))
        cand = self._tri_index.query_box(lo, hi)
        if not len(cand):
            return
        hits = segment_triangle_hits(p0, p1, self._tris[cand])
        hit = hits <= 1.0
        if not hit.any():
            return
        slots = np.nonzero(hit)[0]
        frac = hits[slots]
        # place the droplet at the intersection point
        s["pos"][slots] = p0[slots] + frac[:, None] * (p1[slots] - p0[slots])
        removed = self.sets.remove_slots(cube, slots)
        self.sets.retire(removed, DEPOSITED_WALL, self.time)
        stats["deposited"] += len(slots)

    # ------------------------------------------------------------ persistence
    def state_bytes(self, extra_meta: dict | None = None) -> bytes:
        """Deterministic little-endian serialisation of the full tracker state."""
        import json as _json
        import struct as _struct

        from .particles import _COLUMNS

        blobs = []
        meta = {
            "time": self.time,
            "next_id": self.sets._next_id,
            "total_emitted": self.sets.total_emitted,
            "event_counter": self._event_counter,
            "cubes": [],
            "terminal": [
                [t.id, t.status, list(t.pos), t.d, t.T, t.m, t.d0, t.time]
                for t in self.sets.terminal
            ],
            "extra": extra_meta or {},
        }
        for cube in sorted(self.sets.by_cube):
            s = self.sets.by_cube[cube]
            cols = []
            for k in _COLUMNS:
                arr = np.ascontiguousarray(s[k])
                dt = arr.dtype.newbyteorder("<")
                raw = arr.astype(dt, copy=False).tobytes()
                cols.append([k, str(arr.dtype), list(arr.shape), len(raw)])
                blobs.append(raw)
            meta["cubes"].append([int(cube), cols])
        hb = _json.dumps(meta, sort_keys=True).encode()
        return _struct.pack("<I", len(hb)) + hb + b"".join(blobs)

    def load_state_bytes(self, data: bytes) -> dict:
        import json as _json
        import struct as _struct

        from .particles import TerminalRecord, _COLUMNS, _empty_set

        (hlen,) = _struct.unpack_from("<I", data, 0)
        meta = _json.loads(data[4 : 4 + hlen].decode())
        off = 4 + hlen
        self.time = float(meta["time"])
        self.sets.by_cube.clear()
        self.sets.index.clear()
        self.sets.terminal = [
            TerminalRecord(r[0], r[1], tuple(r[2]), r[3], r[4], r[5], r[6], r[7])
            for r in meta["terminal"]
        ]
        self.sets._next_id = int(meta["next_id"])
        self.sets.total_emitted = int(meta["total_emitted"])
        self._event_counter = int(meta["event_counter"])
        for cube, cols in meta["cubes"]:
            s = _empty_set()
            for name, dtype, shape, nbytes in cols:
                arr = np.frombuffer(data[off : off + nbytes], dtype=np.dtype(dtype).newbyteorder("<"))
                off += nbytes
                s[name] = arr.astype(np.dtype(dtype), copy=True).reshape(shape)
            self.sets.by_cube[int(cube)] = s
            self.sets.index.update(
                {pid: (int(cube), k) for k, pid in enumerate(s["id"].tolist())}
            )
        return meta.get("extra", {})

    def _migrate(self, stats: dict | None = None) -> None:
        """Move particles whose position left their owning cube."""
        moves: dict[int, list] = {}
        for cube in sorted(self.sets.by_cube):
            s = self.sets.by_cube[cube]
            n = len(s["id"])
            if n == 0:
                continue
            lo = self.grid.origins[cube]
            hi = lo + self.grid.edges[cube]
            # ownership matches cell_lookup: a cube owns (lo, hi] per axis,
            # with the closed lower face only on the domain boundary
            lo_ok = (s["pos"] > lo) | ((s["pos"] == lo) & (lo == self.grid.domain_lo))
            inside = np.all(lo_ok & (s["pos"] <= hi), axis=1)
            out = np.nonzero(~inside)[0]
            if not len(out):
                continue
            removed = self.sets.remove_slots(cube, out)
            dest = self.grid.locate_cubes(removed["pos"])
            exited = dest < 0
            if exited.any():
                gone = {k: removed[k][exited] for k in removed}
                self.sets.retire(gone, EXITED, self.time)
                if stats is not None:
                    stats["exited"] += int(exited.sum())
            keep = ~exited
            for dcube in np.unique(dest[keep]):
                sel = keep & (dest == dcube)
                batch = {k: removed[k][sel] for k in removed}
                moves.setdefault(int(dcube), []).append(batch)
            if stats is not None:
                stats["migrations"] += int(keep.sum())
        for dcube in sorted(moves):
            for batch in moves[dcube]:
                self.sets.append(dcube, batch)
