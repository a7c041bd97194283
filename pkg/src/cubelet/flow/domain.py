"""Solver-facing topology: a stack of equal blocks plus boundary handling.

Two flavours share one code path: a CubeGrid (blocks are its cubes, halos go
through the grid exchange plan) and a single free-standing block used for
canonical validation problems (Sod tube, vortex, cavity), where halos wrap
periodically or come from boundary conditions.  Field arrays are always
(n_blocks, n_vars, X, Y, Z) with X = nx + 2 halo layers, etc.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import vars as V
from ..grid import CubeGrid, ExchangePlan

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


@dataclass
class BCSpec:
    kind: str  # wall | slip | inlet | outlet | farfield | periodic
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature_K: float | None = None  # walls: None = adiabatic
    pressure_Pa: float = 101325.0
    Y: tuple[float, ...] = ()
    density: float | None = None  # farfield rho (else from P, T)
    patches: list = field(default_factory=list)  # (lo2, hi2, BCSpec) in metres

    def wall_like(self) -> bool:
        return self.kind in ("wall", "slip")


class Domain:
    def __init__(self, n_blocks, nx, ny, nz, halo, spacing, origins, levels=None):
        self.nc = n_blocks
        self.nx, self.ny, self.nz = nx, ny, nz
        self.H = halo
        self.h = np.asarray(spacing, dtype=float).reshape(-1)  # (nc,)
        self.origins = np.asarray(origins, dtype=float).reshape(-1, 3)
        self.levels = levels if levels is not None else np.zeros(self.nc, dtype=int)
        self.bcs: dict[str, BCSpec] = {}
        self.grid: CubeGrid | None = None
        self._plan: ExchangePlan | None = None
        self.periodic = (False, False, False)
        # per face: array of block ids whose face lies on the domain boundary
        self.boundary_blocks: dict[str, np.ndarray] = {}

    # ------------------------------------------------------------ constructors
    @classmethod
    def from_grid(cls, grid: CubeGrid, bcs: dict[str, BCSpec]) -> "Domain":
        n = grid.cells_per_edge
        d = cls(
            grid.n_cubes,
            n,
            n,
            n,
            grid.halo_width,
            grid.spacings,
            grid.origins,
            grid.levels,
        )
        d.grid = grid
        d._plan = ExchangePlan(grid)
        d.periodic = grid.periodic
        d.bcs = dict(bcs)
        ax_dir = {"x-": (-1, 0, 0), "x+": (1, 0, 0), "y-": (0, -1, 0), "y+": (0, 1, 0), "z-": (0, 0, -1), "z+": (0, 0, 1)}
        for face, dvec in ax_dir.items():
            ids = d._plan.boundary_faces.get(dvec, np.empty(0, dtype=np.int64))
            d.boundary_blocks[face] = ids
        d._check_bcs()
        return d

    @classmethod
    def single_block(
        cls,
        shape: tuple[int, int, int],
        spacing: float,
        bcs: dict[str, BCSpec],
        halo: int = 2,
        origin=(0.0, 0.0, 0.0),
    ) -> "Domain":
        nx, ny, nz = shape
        d = cls(1, nx, ny, nz, halo, [spacing], [origin])
        d.bcs = dict(bcs)
        d.periodic = tuple(
            bcs.get(f"{ax}-", BCSpec("wall")).kind == "periodic" for ax in "xyz"
        )
        for face in FACES:
            ax = "xyz".index(face[0])
            if d.periodic[ax]:
                d.boundary_blocks[face] = np.empty(0, dtype=np.int64)
            else:
                d.boundary_blocks[face] = np.zeros(1, dtype=np.int64)
        d._check_bcs()
        return d

    def _check_bcs(self):
        for ax in range(3):
            lo = self.bcs.get(FACES[2 * ax])
            hi = self.bcs.get(FACES[2 * ax + 1])
            if (lo and lo.kind == "periodic") != (hi and hi.kind == "periodic"):
                raise ValueError("periodic boundaries must come in matching pairs")
        for face in FACES:
            if len(self.boundary_blocks.get(face, ())) and face not in self.bcs:
                raise ValueError(f"no boundary condition for domain face {face}")

    # ---------------------------------------------------------------- geometry
    @property
    def interior_shape(self):
        return (self.nc, self.nx, self.ny, self.nz)

    @property
    def padded_shape(self):
        H = self.H
        return (self.nx + 2 * H, self.ny + 2 * H, self.nz + 2 * H)

    def alloc(self, nv: int) -> np.ndarray:
        return np.zeros((self.nc, nv) + self.padded_shape)

    def interior(self, arr: np.ndarray) -> np.ndarray:
        H = self.H
        return arr[..., H : H + self.nx, H : H + self.ny, H : H + self.nz]

    def cell_volumes(self) -> np.ndarray:
        return self.h**3

    def cell_centers(self, block: int):
        H = self.H
        o = self.origins[block]
        h = self.h[block]
        return tuple(
            o[ax] + (np.arange((self.nx, self.ny, self.nz)[ax]) + 0.5) * h for ax in range(3)
        )

    # ---------------------------------------------------------------- exchange
    def exchange(self, arr: np.ndarray) -> None:
        if self._plan is not None:
            self._plan.apply(arr)
            return
        # single block: modular periodic wrap per axis (sequential passes
        # fill edge/corner halos; wrap handles blocks thinner than the halo)
        H = self.H
        for ax in range(3):
            if not self.periodic[ax]:
                continue
            n = (self.nx, self.ny, self.nz)[ax]
            axi = arr.ndim - 3 + ax
            for dst in (np.arange(0, H), np.arange(n + H, n + 2 * H)):
                src = H + (dst - H) % n
                sl = [slice(None)] * arr.ndim
                ss = [slice(None)] * arr.ndim
                sl[axi] = dst
                ss[axi] = src
                arr[tuple(sl)] = arr[tuple(ss)]

    # ------------------------------------------------------ boundary condition
    def apply_bcs(self, Wa: np.ndarray) -> None:
        """Fill domain-boundary halo layers of the primitive array in place."""
        H = self.H
        for ax in range(3):
            n = (self.nx, self.ny, self.nz)[ax]
            for side, face in ((0, FACES[2 * ax]), (1, FACES[2 * ax + 1])):
                ids = self.boundary_blocks.get(face)
                if ids is None or not len(ids):
                    continue
                spec = self.bcs[face]
                if spec.kind == "periodic":
                    continue
                self._fill_face(Wa, ids, ax, side, spec)
                for lo2, hi2, pspec in spec.patches:
                    self._fill_face(Wa, ids, ax, side, pspec, patch=(lo2, hi2))

    def _face_transverse_masks(self, ids, ax, lo2, hi2):
        """Per-block boolean masks over the two transverse axes (padded)."""
        t1, t2 = [a for a in range(3) if a != ax]
        H = self.H
        n1 = (self.nx, self.ny, self.nz)[t1]
        n2 = (self.nx, self.ny, self.nz)[t2]
        masks = np.zeros((len(ids), n1 + 2 * H, n2 + 2 * H), dtype=bool)
        for i, b in enumerate(ids):
            c1 = self.origins[b][t1] + (np.arange(-H, n1 + H) + 0.5) * self.h[b]
            c2 = self.origins[b][t2] + (np.arange(-H, n2 + H) + 0.5) * self.h[b]
            m1 = (c1 >= lo2[0]) & (c1 <= hi2[0])
            m2 = (c2 >= lo2[1]) & (c2 <= hi2[1])
            masks[i] = m1[:, None] & m2[None, :]
        return masks

    def _fill_face(self, Wa, ids, ax, side, spec: BCSpec, patch=None):
        """Fill all H halo layers of one face at once: layer l mirrors
        interior layer l (flip along the face axis)."""
        H = self.H
        n = (self.nx, self.ny, self.nz)[ax]
        axi = 2 + ax
        pmask = None
        if patch is not None:
            pmask = self._face_transverse_masks(ids, ax, patch[0], patch[1])
            pmask = np.expand_dims(pmask, axis=1)  # variable axis
        if spec.kind == "periodic":
            return
        for layer in range(1, H + 1):
            if side == 0:
                dst = H - layer
                src = H + min(layer - 1, n - 1)
            else:
                dst = H + n - 1 + layer
                src = H + n - 1 - min(layer - 1, n - 1)
            dsl = [slice(None)] * 4
            ssl = [slice(None)] * 4
            dsl[axi - 1] = dst
            ssl[axi - 1] = src
            mirror = Wa[(ids,) + tuple(ssl)]
            ghost = mirror.copy()
            if spec.kind == "wall":
                for c in range(3):
                    ghost[:, V.UX + c] = 2.0 * spec.velocity[c] - mirror[:, V.UX + c]
                if spec.temperature_K is not None:
                    ghost[:, V.T] = 2.0 * spec.temperature_K - mirror[:, V.T]
            elif spec.kind == "slip":
                ghost[:, V.UX + ax] = -mirror[:, V.UX + ax]
            elif spec.kind == "inlet":
                for c in range(3):
                    ghost[:, V.UX + c] = spec.velocity[c]
                if spec.temperature_K is not None:
                    ghost[:, V.T] = spec.temperature_K
                for k, y in enumerate(spec.Y):
                    ghost[:, V.Y0 + k] = y
            elif spec.kind == "outlet":
                ghost[:, V.P] = spec.pressure_Pa
            elif spec.kind == "farfield":
                ghost[:, V.P] = spec.pressure_Pa
                for c in range(3):
                    ghost[:, V.UX + c] = spec.velocity[c]
                if spec.temperature_K is not None:
                    ghost[:, V.T] = spec.temperature_K
                for k, y in enumerate(spec.Y):
                    ghost[:, V.Y0 + k] = y
            else:
                raise ValueError(f"unknown BC kind {spec.kind}")
            if pmask is not None:
                keep = Wa[(ids,) + tuple(dsl)]
                ghost = np.where(np.broadcast_to(pmask, keep.shape), ghost, keep)
            Wa[(ids,) + tuple(dsl)] = ghost

    # ----------------------------------------------------- wall flux overrides
    def wall_face_masks(self, ax: int, side: int):
        """(ids, mask) for faces where the inviscid flux is the exact wall
        flux (zero mass); mask covers the transverse interior extent."""
        face = FACES[2 * ax + side]
        ids = self.boundary_blocks.get(face)
        if ids is None or not len(ids):
            return None
        spec = self.bcs[face]
        H = self.H
        t1, t2 = [a for a in range(3) if a != ax]
        n1 = (self.nx, self.ny, self.nz)[t1]
        n2 = (self.nx, self.ny, self.nz)[t2]
        base = np.full((len(ids), n1, n2), spec.wall_like(), dtype=bool)
        for lo2, hi2, pspec in spec.patches:
            pm = self._face_transverse_masks(ids, ax, lo2, hi2)[:, H : H + n1, H : H + n2]
            base[pm] = pspec.wall_like()
        if not base.any():
            return None
        return ids, base
