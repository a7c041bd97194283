"""Hierarchical equidistant Cartesian grid of cubes.

The domain is tiled by root cubes which subdivide octree-fashion toward
geometry.  Every leaf cube carries an identical block of cells_per_edge^3
cells plus halo layers, so the per-cube cost is uniform by construction.
Adjacent leaves never differ by more than one level (2:1 balance, enforced
over the full 26-neighbourhood).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geom import tri_box_overlap, triangle_aabbs

DIRECTIONS: tuple[tuple[int, int, int], ...] = tuple(
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
)

DEFAULT_MAX_LEVEL = 12


class GridError(ValueError):
    pass


class OutsideDomainError(LookupError):
    """Raised by point lookups for positions outside the domain bounds."""


@dataclass(frozen=True)
class RefinementSpec:
    """Target cell spacings driving octree refinement.

    wall_spacing_m: desired cell spacing for cubes touching geometry (or
    within wall_band_m of it).  far_spacing_m: spacing required everywhere
    else.  Levels derive from root cube size and cells_per_edge.
    """

    wall_spacing_m: float
    far_spacing_m: float
    wall_band_m: float = 0.0
    max_level: int = DEFAULT_MAX_LEVEL


@dataclass
class Cube:
    id: int
    level: int
    coords: tuple[int, int, int]  # integer position in the level lattice
    origin: np.ndarray
    edge: float
    cell_spacing: float


class CubeGrid:
    """Collection of leaf cubes tiling an axis-aligned domain box."""

    def __init__(
        self,
        domain_lo,
        domain_hi,
        root_cube_size: float,
        cells_per_edge: int = 16,
        halo_width: int = 2,
        periodic=(False, False, False),
    ):
        self.domain_lo = np.asarray(domain_lo, dtype=float)
        self.domain_hi = np.asarray(domain_hi, dtype=float)
        if np.any(self.domain_hi <= self.domain_lo):
            raise GridError("degenerate domain box")
        self.root_size = float(root_cube_size)
        ext = self.domain_hi - self.domain_lo
        counts = ext / self.root_size
        rounded = np.rint(counts)
        if np.any(np.abs(counts - rounded) > 1e-9 * np.maximum(1.0, np.abs(counts))) or np.any(
            rounded < 1
        ):
            raise GridError("domain extents must be integer multiples of root_cube_size")
        self.root_counts = rounded.astype(int)
        self.cells_per_edge = int(cells_per_edge)
        self.halo_width = int(halo_width)
        self.periodic = tuple(bool(p) for p in periodic)
        self.cubes: list[Cube] = []
        # leaf/internal octree node sets keyed by (level, ix, iy, iz)
        self._leaves: dict[tuple[int, int, int, int], int] = {}
        self._internal: set[tuple[int, int, int, int]] = set()
        self.max_level = 0

    # ------------------------------------------------------------------ build
    @classmethod
    def build(
        cls,
        domain_lo,
        domain_hi,
        root_cube_size: float,
        refine_keys: set[tuple[int, int, int, int]] | None = None,
        wall_level: int = 0,
        cells_per_edge: int = 16,
        halo_width: int = 2,
        periodic=(False, False, False),
        base_level: int = 0,
        refine_test=None,
    ) -> "CubeGrid":
        """Construct a balanced grid.

        refine_test(level, lo, hi) -> bool decides whether the cube box
        [lo, hi] must subdivide further (until wall_level).  base_level
        refines everything uniformly first.
        """
        g = cls(domain_lo, domain_hi, root_cube_size, cells_per_edge, halo_width, periodic)
        keys: set[tuple[int, int, int, int]] = set()
        for ix in range(g.root_counts[0]):
            for iy in range(g.root_counts[1]):
                for iz in range(g.root_counts[2]):
                    keys.add((0, ix, iy, iz))

        def split(key):
            keys.discard(key)
            g._internal.add(key)
            lvl, ix, iy, iz = key
            for cx in (0, 1):
                for cy in (0, 1):
                    for cz in (0, 1):
                        keys.add((lvl + 1, 2 * ix + cx, 2 * iy + cy, 2 * iz + cz))

        # uniform refinement to base level
        for _ in range(base_level):
            for key in [k for k in keys]:
                split(key)

        # geometry-driven refinement
        if refine_test is not None and wall_level > base_level:
            work = [k for k in keys]
            while work:
                key = work.pop()
                if key not in keys:
                    continue
                lvl = key[0]
                if lvl >= wall_level:
                    continue
                lo, hi = g._key_box(key)
                if refine_test(lvl, lo, hi):
                    split(key)
                    lvl1 = lvl + 1
                    for cx in (0, 1):
                        for cy in (0, 1):
                            for cz in (0, 1):
                                work.append(
                                    (lvl1, 2 * key[1] + cx, 2 * key[2] + cy, 2 * key[3] + cz)
                                )

        # 2:1 balance smoothing over the 26-neighbourhood
        changed = True
        while changed:
            changed = False
            for key in sorted(keys):
                lvl, ix, iy, iz = key
                for d in DIRECTIONS:
                    nb = g._neighbor_key(key, d)
                    if nb is None:
                        continue
                    if g._adjacent_depth(nb, keys) > lvl + 1:
                        split(key)
                        changed = True
                        break

        g._finalize(keys)
        return g

    def _key_box(self, key):
        lvl, ix, iy, iz = key
        edge = self.root_size / (1 << lvl)
        lo = self.domain_lo + edge * np.array([ix, iy, iz], dtype=float)
        return lo, lo + edge

    def _neighbor_key(self, key, d):
        """Same-level lattice coords across direction d, or None at a wall."""
        lvl, ix, iy, iz = key
        dims = self.root_counts * (1 << lvl)
        out = [ix + d[0], iy + d[1], iz + d[2]]
        for ax in range(3):
            if out[ax] < 0 or out[ax] >= dims[ax]:
                if self.periodic[ax]:
                    out[ax] %= dims[ax]
                else:
                    return None
        return (lvl, out[0], out[1], out[2])

    def _adjacent_depth(self, key, keys) -> int:
        """Deepest leaf level at or below octree node `key` (bounded search)."""
        if key in keys:
            return key[0]
        lvl, ix, iy, iz = key
        best = -1
        # walk up: an ancestor leaf covers this region
        k = key
        while k[0] > 0:
            k = (k[0] - 1, k[1] // 2, k[2] // 2, k[3] // 2)
            if k in keys:
                return k[0]
        # otherwise descend
        stack = [key]
        while stack:
            cur = stack.pop()
            if cur in keys:
                best = max(best, cur[0])
                continue
            nxt = cur[0] + 1
            for cx in (0, 1):
                for cy in (0, 1):
                    for cz in (0, 1):
                        stack.append((nxt, 2 * cur[1] + cx, 2 * cur[2] + cy, 2 * cur[3] + cz))
        return best

    def _finalize(self, keys):
        """Assign ids in Morton order of origins at the finest lattice."""
        max_level = max(k[0] for k in keys)
        self.max_level = max_level

        def morton_key(key):
            lvl, ix, iy, iz = key
            shift = max_level - lvl
            return _morton3(ix << shift, iy << shift, iz << shift)

        ordered = sorted(keys, key=morton_key)
        for cid, key in enumerate(ordered):
            lvl = key[0]
            edge = self.root_size / (1 << lvl)
            origin = self.domain_lo + edge * np.array(key[1:], dtype=float)
            self.cubes.append(
                Cube(
                    id=cid,
                    level=lvl,
                    coords=key[1:],
                    origin=origin,
                    edge=edge,
                    cell_spacing=edge / self.cells_per_edge,
                )
            )
            self._leaves[key] = cid
        # sorted per-level key arrays for vectorised lookup
        self._level_leaf_keys = {}
        self._level_leaf_ids = {}
        self._level_internal_keys = {}
        for lvl in range(self.max_level + 1):
            ks = sorted(k for k in self._leaves if k[0] == lvl)
            self._level_leaf_keys[lvl] = np.array(
                [self._linear_key(k) for k in ks], dtype=np.int64
            )
            self._level_leaf_ids[lvl] = np.array([self._leaves[k] for k in ks], dtype=np.int64)
            iks = sorted(self._linear_key(k) for k in self._internal if k[0] == lvl)
            self._level_internal_keys[lvl] = np.array(iks, dtype=np.int64)
        self.levels = np.array([c.level for c in self.cubes], dtype=np.int64)
        self.origins = np.array([c.origin for c in self.cubes])
        self.edges = np.array([c.edge for c in self.cubes])
        self.spacings = self.edges / self.cells_per_edge

    def _linear_key(self, key) -> int:
        lvl, ix, iy, iz = key
        dims = self.root_counts * (1 << lvl)
        return (ix * dims[1] + iy) * dims[2] + iz

    # ----------------------------------------------------------------- access
    @property
    def n_cubes(self) -> int:
        return len(self.cubes)

    def level_of(self, cube_id: int) -> int:
        return self.cubes[cube_id].level

    def level_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.cubes:
            out[c.level] = out.get(c.level, 0) + 1
        return out

    def total_cells(self) -> int:
        return self.n_cubes * self.cells_per_edge**3

    def neighbor_entries(self, cube_id: int):
        """All (direction, neighbor id, level delta) adjacencies of a cube."""
        out = []
        c = self.cubes[cube_id]
        key = (c.level,) + c.coords
        for d in DIRECTIONS:
            for nb_id, delta in self._neighbors_across(key, d):
                out.append((d, nb_id, delta))
        return out

    def _neighbors_across(self, key, d):
        """Leaf cubes adjacent to leaf `key` across direction d."""
        nb = self._neighbor_key(key, d)
        if nb is None:
            return []
        if nb in self._leaves:
            return [(self._leaves[nb], 0)]
        # coarser?
        up = (nb[0] - 1, nb[1] // 2, nb[2] // 2, nb[3] // 2)
        if up in self._leaves:
            return [(self._leaves[up], -1)]
        # finer: children of nb facing back toward us
        lvl1 = nb[0] + 1
        out = []
        ranges = []
        for ax in range(3):
            if d[ax] == 1:
                ranges.append((0,))  # low children of the neighbor
            elif d[ax] == -1:
                ranges.append((1,))
            else:
                ranges.append((0, 1))
        for cx in ranges[0]:
            for cy in ranges[1]:
                for cz in ranges[2]:
                    childk = (lvl1, 2 * nb[1] + cx, 2 * nb[2] + cy, 2 * nb[3] + cz)
                    if childk in self._leaves:
                        out.append((self._leaves[childk], 1))
                    else:
                        raise GridError("grid is not 2:1 balanced at %r -> %r" % (key, childk))
        return out

    # ----------------------------------------------------------- point lookup
    def locate_cube(self, point) -> int:
        p = np.asarray(point, dtype=float)
        if np.any(p < self.domain_lo) or np.any(p > self.domain_hi):
            raise OutsideDomainError(f"point {p.tolist()} outside domain")
        coords = []
        for ax in range(3):
            t = (p[ax] - self.domain_lo[ax]) / self.root_size
            i = int(np.floor(t))
            if i == t and i > 0:
                i -= 1  # boundary ties go to the lower cube
            coords.append(min(i, self.root_counts[ax] - 1))
        key = (0, coords[0], coords[1], coords[2])
        while key in self._internal:
            lvl, ix, iy, iz = key
            edge = self.root_size / (1 << lvl)
            mid = self.domain_lo + edge * (np.array([ix, iy, iz], dtype=float) + 0.5)
            child = [1 if p[ax] > mid[ax] else 0 for ax in range(3)]
            key = (lvl + 1, 2 * ix + child[0], 2 * iy + child[1], 2 * iz + child[2])
        return self._leaves[key]

    def locate_cubes(self, points: np.ndarray) -> np.ndarray:
        """Vectorised locate_cube; -1 marks points outside the domain."""
        p = np.asarray(points, dtype=float)
        out = np.full(len(p), -1, dtype=np.int64)
        inside = np.all((p >= self.domain_lo) & (p <= self.domain_hi), axis=1)
        if not inside.any():
            return out
        idx = np.nonzero(inside)[0]
        pp = p[idx]
        t = (pp - self.domain_lo) / self.root_size
        co = np.floor(t).astype(np.int64)
        exact = (t == co) & (co > 0)
        co[exact] -= 1
        co = np.minimum(co, self.root_counts - 1)
        lvl = 0
        pending = np.arange(len(pp))
        cur = co
        while len(pending):
            dims = self.root_counts * (1 << lvl)
            lin = (cur[:, 0] * dims[1] + cur[:, 1]) * dims[2] + cur[:, 2]
            leaf_keys = self._level_leaf_keys.get(lvl)
            if leaf_keys is not None and len(leaf_keys):
                pos = np.searchsorted(leaf_keys, lin)
                pos = np.minimum(pos, len(leaf_keys) - 1)
                is_leaf = leaf_keys[pos] == lin
                hit = np.nonzero(is_leaf)[0]
                out[idx[pending[hit]]] = self._level_leaf_ids[lvl][pos[hit]]
                keep = ~is_leaf
                pending = pending[keep]
                cur = cur[keep]
                lin = lin[keep]
            if not len(pending):
                break
            if lvl >= self.max_level:
                raise GridError("octree descent failed; grid inconsistent")
            edge = self.root_size / (1 << lvl)
            mid = self.domain_lo + edge * (cur + 0.5)
            child = (pp[pending] > mid).astype(np.int64)
            cur = 2 * cur + child
            lvl += 1
        return out

    def cell_lookup(self, point) -> int:
        """Packed global index of the unique leaf cell containing point."""
        cid = self.locate_cube(point)
        c = self.cubes[cid]
        p = np.asarray(point, dtype=float)
        n = self.cells_per_edge
        local = []
        for ax in range(3):
            t = (p[ax] - c.origin[ax]) / c.cell_spacing
            i = int(np.floor(t))
            if i == t and i > 0:
                i -= 1
            local.append(min(max(i, 0), n - 1))
        return pack_cell_index(cid, local[0], local[1], local[2], n)

    # ---------------------------------------------------------------- reports
    def summary(self) -> str:
        lines = [
            "cube grid summary",
            f"  domain: {self.domain_lo.tolist()} .. {self.domain_hi.tolist()} m",
            f"  root cube size: {self.root_size} m, root tiling: {self.root_counts.tolist()}",
            f"  cells per cube edge: {self.cells_per_edge}, halo width: {self.halo_width}",
            f"  cubes: {self.n_cubes}, cells: {self.total_cells()}",
        ]
        for lvl, cnt in sorted(self.level_counts().items()):
            edge = self.root_size / (1 << lvl)
            lines.append(
                f"  level {lvl}: {cnt} cubes, edge {edge:.6g} m, spacing {edge / self.cells_per_edge:.6g} m"
            )
        return "\n".join(lines)

    def write_outline_vtk(self, path) -> None:
        """Legacy ASCII VTK unstructured grid of cube outlines."""
        pts = []
        cells = []
        for c in self.cubes:
            base = len(pts)
            for cz in (0, 1):
                for cy in (0, 1):
                    for cx in (0, 1):
                        pts.append(c.origin + c.edge * np.array([cx, cy, cz], dtype=float))
            # VTK_HEXAHEDRON ordering
            cells.append(
                [base + k for k in (0, 1, 3, 2, 4, 5, 7, 6)]
            )
        with open(path, "w") as f:
            f.write("# vtk DataFile Version 3.0\ncube outlines\nASCII\n")
            f.write("DATASET UNSTRUCTURED_GRID\n")
            f.write(f"POINTS {len(pts)} double\n")
            for p in pts:
                f.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            f.write(f"CELLS {len(cells)} {len(cells) * 9}\n")
            for cell in cells:
                f.write("8 " + " ".join(str(i) for i in cell) + "\n")
            f.write(f"CELL_TYPES {len(cells)}\n")
            for _ in cells:
                f.write("12\n")
            f.write(f"CELL_DATA {len(cells)}\nSCALARS level int 1\nLOOKUP_TABLE default\n")
            for c in self.cubes:
                f.write(f"{c.level}\n")


# ------------------------------------------------------------------- helpers
def _morton3(x: int, y: int, z: int) -> int:
    out = 0
    for bit in range(21):
        out |= ((x >> bit) & 1) << (3 * bit + 2)
        out |= ((y >> bit) & 1) << (3 * bit + 1)
        out |= ((z >> bit) & 1) << (3 * bit)
    return out


def pack_cell_index(cube_id: int, i: int, j: int, k: int, cells_per_edge: int) -> int:
    n = cells_per_edge
    if not (0 <= i < n and 0 <= j < n and 0 <= k < n):
        raise ValueError("local cell index out of range")
    return ((cube_id * n + i) * n + j) * n + k


def unpack_cell_index(packed: int, cells_per_edge: int) -> tuple[int, int, int, int]:
    n = cells_per_edge
    k = packed % n
    packed //= n
    j = packed % n
    packed //= n
    i = packed % n
    return packed // n, i, j, k


def required_level(root_size: float, cells_per_edge: int, target_spacing: float) -> int:
    """Smallest level whose cell spacing is <= target_spacing."""
    if target_spacing <= 0:
        raise GridError("target spacing must be positive")
    lvl = int(np.ceil(np.log2(root_size / (target_spacing * cells_per_edge))))
    return max(lvl, 0)


def build_grid(
    domain_lo,
    domain_hi,
    geometry_tris: np.ndarray | None,
    refine_spec: RefinementSpec,
    root_cube_size: float | None = None,
    cells_per_edge: int = 16,
    halo_width: int = 2,
    periodic=(False, False, False),
) -> CubeGrid:
    """Build a 2:1-balanced grid refined to wall spacing around geometry.

    Cubes whose box (inflated by wall_band_m) overlaps any triangle refine
    until the wall level; everything else stays at the far-field level.
    """
    lo = np.asarray(domain_lo, dtype=float)
    hi = np.asarray(domain_hi, dtype=float)
    if root_cube_size is None:
        root_cube_size = float(np.min(hi - lo))
    far_level = required_level(root_cube_size, cells_per_edge, refine_spec.far_spacing_m)
    wall_level = required_level(root_cube_size, cells_per_edge, refine_spec.wall_spacing_m)
    wall_level = max(wall_level, far_level)
    if wall_level > refine_spec.max_level:
        raise GridError(
            f"wall spacing requires level {wall_level} > max_level {refine_spec.max_level}"
        )

    tris = None
    if geometry_tris is not None and len(geometry_tris):
        tris = np.asarray(geometry_tris, dtype=float)
        tlo, thi = triangle_aabbs(tris)
        if np.any(tlo.min(axis=0) < lo - 1e-12) or np.any(thi.max(axis=0) > hi + 1e-12):
            raise GridError("geometry extends outside the domain box")

    band = refine_spec.wall_band_m

    def refine_test(level, box_lo, box_hi):
        if tris is None:
            return False
        mask = tri_box_overlap(tris, box_lo - band, box_hi + band)
        return bool(mask.any())

    return CubeGrid.build(
        lo,
        hi,
        root_cube_size,
        wall_level=wall_level,
        cells_per_edge=cells_per_edge,
        halo_width=halo_width,
        periodic=periodic,
        base_level=far_level,
        refine_test=refine_test if tris is not None else None,
    )
