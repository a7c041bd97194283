"""Halo (buffer cell) exchange between neighbouring cubes.

Interface rules: same level is a plain copy, fine-to-coarse halos take the
arithmetic mean of the 2^3 covering fine cells, coarse-to-fine halos take the
value of the containing coarse cell (piecewise constant).  Diagonal (edge and
corner) buffers follow the same rules.  The exchange is a bulk-synchronous
phase: interiors must be complete before halos are read.
"""

from __future__ import annotations

import numpy as np

from .core import DIRECTIONS, CubeGrid, GridError


class ExchangePlan:
    """Precomputed gather/scatter index maps for one grid."""

    def __init__(self, grid: CubeGrid):
        self.grid = grid
        n = grid.cells_per_edge
        H = grid.halo_width
        N = n + 2 * H
        self.n, self.H, self.N = n, H, N
        if n % 2 or (H > n):
            raise GridError("cells_per_edge must be even and >= halo_width")

        same_d, same_s = [], []  # (cube, flat) pairs
        avg_d, avg_s = [], []
        inj_d, inj_s = [], []
        boundary: dict[tuple[int, int, int], list[int]] = {}

        ax_ranges = {
            -1: np.arange(0, H),
            0: np.arange(H, H + n),
            1: np.arange(H + n, N),
        }

        for c in grid.cubes:
            key = (c.level,) + c.coords
            for d in DIRECTIONS:
                nbs = self._resolve(grid, key, d)
                if nbs is None:
                    boundary.setdefault(d, []).append(c.id)
                    continue
                delta = nbs[0]
                lx, ly, lz = np.meshgrid(
                    ax_ranges[d[0]], ax_ranges[d[1]], ax_ranges[d[2]], indexing="ij"
                )
                lx, ly, lz = lx.ravel(), ly.ravel(), lz.ravel()
                dst_flat = (lx * N + ly) * N + lz
                if delta == 0:
                    nb_id = nbs[1]
                    sx = lx - d[0] * n
                    sy = ly - d[1] * n
                    sz = lz - d[2] * n
                    src_flat = (sx * N + sy) * N + sz
                    same_d.append(np.stack([np.full_like(dst_flat, c.id), dst_flat]))
                    same_s.append(np.stack([np.full_like(src_flat, nb_id), src_flat]))
                elif delta == -1:
                    nb_id = nbs[1]
                    up = nbs[2]  # unwrapped coarse coords
                    g = np.stack(
                        [
                            c.coords[0] * n + lx - H,
                            c.coords[1] * n + ly - H,
                            c.coords[2] * n + lz - H,
                        ]
                    )
                    cg = g // 2
                    s = [cg[ax] - up[ax] * n + H for ax in range(3)]
                    src_flat = (s[0] * N + s[1]) * N + s[2]
                    if np.any(src_flat < 0) or np.any(src_flat >= N**3):
                        raise GridError("coarse halo source out of range")
                    inj_d.append(np.stack([np.full_like(dst_flat, c.id), dst_flat]))
                    inj_s.append(np.stack([np.full_like(src_flat, nb_id), src_flat]))
                else:  # finer neighbours: average 8 covering cells per halo cell
                    g = np.stack(
                        [
                            c.coords[0] * n + lx - H,
                            c.coords[1] * n + ly - H,
                            c.coords[2] * n + lz - H,
                        ]
                    )
                    m = len(lx)
                    srcs_cube = np.empty((m, 8), dtype=np.int64)
                    srcs_flat = np.empty((m, 8), dtype=np.int64)
                    children = nbs[1]  # dict wrapped-coords -> cube id at level+1
                    corner = 0
                    for ox in (0, 1):
                        for oy in (0, 1):
                            for oz in (0, 1):
                                f = 2 * g + np.array([[ox], [oy], [oz]])
                                q = f // n  # unwrapped fine cube coords
                                loc = [f[ax] - q[ax] * n + H for ax in range(3)]
                                cid = self._children_ids(grid, c.level + 1, q, children)
                                srcs_cube[:, corner] = cid
                                srcs_flat[:, corner] = (loc[0] * N + loc[1]) * N + loc[2]
                                corner += 1
                    avg_d.append(np.stack([np.full_like(dst_flat, c.id), dst_flat]))
                    avg_s.append((srcs_cube, srcs_flat))

        def cat(pairs):
            if not pairs:
                return np.empty(0, np.int64), np.empty(0, np.int64)
            arr = np.concatenate(pairs, axis=1)
            return arr[0], arr[1]

        self.same_dc, self.same_df = cat(same_d)
        self.same_sc, self.same_sf = cat(same_s)
        self.inj_dc, self.inj_df = cat(inj_d)
        self.inj_sc, self.inj_sf = cat(inj_s)
        self.avg_dc, self.avg_df = cat(avg_d)
        if avg_s:
            self.avg_sc = np.concatenate([a[0] for a in avg_s], axis=0)
            self.avg_sf = np.concatenate([a[1] for a in avg_s], axis=0)
        else:
            self.avg_sc = np.empty((0, 8), np.int64)
            self.avg_sf = np.empty((0, 8), np.int64)
        self.boundary_faces = {d: np.array(v, dtype=np.int64) for d, v in boundary.items()}

    @staticmethod
    def _resolve(grid: CubeGrid, key, d):
        """Classify the neighbour across d: None (domain boundary),
        (0, id), (-1, id, unwrapped_coarse_coords) or (1, children_dict)."""
        lvl = key[0]
        unwrapped = (key[1] + d[0], key[2] + d[1], key[3] + d[2])
        nb = grid._neighbor_key(key, d)
        if nb is None:
            return None
        if nb in grid._leaves:
            return (0, grid._leaves[nb])
        up_unwrapped = tuple(u // 2 for u in unwrapped)
        up_wrapped = (nb[0] - 1, nb[1] // 2, nb[2] // 2, nb[3] // 2)
        if up_wrapped in grid._leaves:
            return (-1, grid._leaves[up_wrapped], up_unwrapped)
        if nb in grid._internal:
            return (1, (nb, unwrapped))
        raise GridError(f"missing neighbour for cube {key} direction {d}")

    @staticmethod
    def _children_ids(grid: CubeGrid, lvl, q, children_info):
        """Leaf ids for unwrapped fine-cube coords q (3, m)."""
        dims = grid.root_counts * (1 << lvl)
        out = np.empty(q.shape[1], dtype=np.int64)
        # wrap per axis
        qq = q.copy()
        for ax in range(3):
            if grid.periodic[ax]:
                qq[ax] %= dims[ax]
        cache: dict[tuple[int, int, int], int] = {}
        for i in range(q.shape[1]):
            ck = (qq[0, i], qq[1, i], qq[2, i])
            cid = cache.get(ck)
            if cid is None:
                leaf = grid._leaves.get((lvl,) + ck)
                if leaf is None:
                    raise GridError(f"grid not 2:1 balanced near fine cube {ck} level {lvl}")
                cache[ck] = leaf
                cid = leaf
            out[i] = cid
        return out

    # ---------------------------------------------------------------- applies
    def apply(self, arr: np.ndarray) -> None:
        """Fill halos of arr in place.

        arr: (n_cubes, nvar, N, N, N) float or (n_cubes, N, N, N) scalar.
        Constants are preserved exactly across every interface type.
        """
        scalar = arr.ndim == 4
        v = arr.reshape(arr.shape[0], 1, -1) if scalar else arr.reshape(arr.shape[0], arr.shape[1], -1)
        if len(self.same_dc):
            v[self.same_dc, :, self.same_df] = v[self.same_sc, :, self.same_sf]
        if len(self.inj_dc):
            v[self.inj_dc, :, self.inj_df] = v[self.inj_sc, :, self.inj_sf]
        if len(self.avg_dc):
            vals = v[self.avg_sc, :, self.avg_sf]  # (M, 8, nvar)
            if np.issubdtype(arr.dtype, np.integer):
                v[self.avg_dc, :, self.avg_df] = vals.max(axis=1)
            else:
                v[self.avg_dc, :, self.avg_df] = vals.mean(axis=1)


def exchange_halos(grid: CubeGrid, arr: np.ndarray) -> None:
    """Exchange halos of a per-cube field array in place (plan is cached)."""
    plan = getattr(grid, "_exchange_plan", None)
    if plan is None:
        plan = ExchangePlan(grid)
        grid._exchange_plan = plan
    plan.apply(arr)
