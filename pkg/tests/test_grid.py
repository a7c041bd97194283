import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubelet.grid import (
    CubeGrid,
    GridError,
    OutsideDomainError,
    RefinementSpec,
    build_grid,
    exchange_halos,
    pack_cell_index,
    partition,
    required_level,
    unpack_cell_index,
)
from cubelet.geom import tri_box_overlap

from oracles import reference_octree_leaves


def alloc(grid, nvar=1, fill=0.0):
    N = grid.cells_per_edge + 2 * grid.halo_width
    return np.full((grid.n_cubes, nvar, N, N, N), fill, dtype=float)


def fill_by_centers(grid, fn):
    """Interior cells take fn(x, y, z); halos zeroed."""
    n, H = grid.cells_per_edge, grid.halo_width
    N = n + 2 * H
    arr = np.zeros((grid.n_cubes, 1, N, N, N))
    for c in grid.cubes:
        ax = c.origin[0] + (np.arange(n) + 0.5) * c.cell_spacing
        ay = c.origin[1] + (np.arange(n) + 0.5) * c.cell_spacing
        az = c.origin[2] + (np.arange(n) + 0.5) * c.cell_spacing
        X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
        arr[c.id, 0, H : H + n, H : H + n, H : H + n] = fn(X, Y, Z)
    return arr


# ----------------------------------------------------------------- build_grid
def test_empty_geometry_single_cube():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1 / 16, 1 / 16), root_cube_size=1.0)
    assert g.n_cubes == 1
    assert g.total_cells() == 16**3
    assert g.cubes[0].cell_spacing == pytest.approx(1 / 16)


def test_build_matches_reference_octree_walk():
    # off-centre triangle, wall level = root + 2; oracle: brute-force walk
    tri = np.array([[[0.1, 0.12, 0.22], [0.28, 0.1, 0.2], [0.12, 0.3, 0.24]]])
    spec = RefinementSpec(wall_spacing_m=1 / 64, far_spacing_m=1 / 16)
    g = build_grid([0, 0, 0], [1, 1, 1], tri, spec, root_cube_size=1.0)

    def overlaps(level, coords):
        edge = 1.0 / (1 << level)
        lo = np.array(coords, dtype=float) * edge
        return bool(tri_box_overlap(tri, lo, lo + edge).any())

    ref = reference_octree_leaves((1, 1, 1), wall_level=2, overlaps=overlaps)
    got = {(c.level,) + tuple(c.coords) for c in g.cubes}
    assert got == ref


def test_refinement_level_cap_rejected():
    # 0.1 mm cells in a 10 m domain with 16 cells/edge needs level 13 > 12
    assert required_level(10.0, 16, 1e-4) == 13
    tri = np.array([[[5, 5, 5], [5.1, 5, 5], [5, 5.1, 5]]])
    with pytest.raises(GridError):
        build_grid([0, 0, 0], [10, 10, 10], tri, RefinementSpec(1e-4, 10 / 16), root_cube_size=10.0)


def test_geometry_outside_domain_rejected():
    tri = np.array([[[2, 2, 2], [3, 2, 2], [2, 3, 2]]])
    with pytest.raises(GridError):
        build_grid([0, 0, 0], [1, 1, 1], tri, RefinementSpec(1 / 32, 1 / 16), root_cube_size=1.0)


def test_tiling_and_balance():
    tri = np.array([[[0.1, 0.12, 0.22], [0.28, 0.1, 0.2], [0.12, 0.3, 0.24]]])
    g = build_grid([0, 0, 0], [1, 1, 1], tri, RefinementSpec(1 / 128, 1 / 16), root_cube_size=1.0)
    vol = sum(c.edge**3 for c in g.cubes)
    assert abs(vol - 1.0) < 1e-12
    # exact tiling at the finest lattice: every fine lattice cell covered once
    Lmax = g.max_level
    dim = 1 << Lmax
    cover = np.zeros((dim, dim, dim), dtype=np.int16)
    for c in g.cubes:
        s = 1 << (Lmax - c.level)
        ix, iy, iz = (np.array(c.coords) * s).tolist()
        cover[ix : ix + s, iy : iy + s, iz : iz + s] += 1
    assert cover.min() == 1 and cover.max() == 1
    # 2:1 balance across all 26-adjacencies
    for c in g.cubes:
        for d, nb, delta in g.neighbor_entries(c.id):
            assert abs(delta) <= 1
            assert abs(g.cubes[nb].level - c.level) <= 1


# -------------------------------------------------------------- exchange_halos
def test_halo_constant_preserved_bitwise():
    tri = np.array([[[0.05, 0.05, 0.05], [0.1, 0.05, 0.05], [0.05, 0.1, 0.05]]])
    g = build_grid(
        [0, 0, 0], [1, 1, 1], tri, RefinementSpec(1 / 32, 1 / 16), root_cube_size=1.0, cells_per_edge=8
    )
    assert len(g.level_counts()) > 1  # mixed levels exercised
    c = 101325.0
    arr = alloc(g, nvar=3, fill=c)
    exchange_halos(g, arr)
    assert np.all(arr == c)


def test_halo_same_level_is_copy():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1, 1), root_cube_size=0.5, cells_per_edge=8)
    assert g.n_cubes == 8 and len(g.level_counts()) == 1
    arr = fill_by_centers(g, lambda x, y, z: x)
    exchange_halos(g, arr)
    n, H = g.cells_per_edge, g.halo_width
    for c in g.cubes:
        xs = c.origin[0] + (np.arange(n + 2 * H) - H + 0.5) * c.cell_spacing
        expect = np.broadcast_to(xs[:, None, None], arr.shape[2:])
        # halo cells that have a same-level neighbour hold the exact linear value
        filled = arr[c.id, 0] != 0.0
        assert np.allclose(arr[c.id, 0][filled], expect[filled], rtol=0, atol=1e-14)


def test_halo_fine_to_coarse_average():
    # mixed-level grid; seed fine cubes with 1..8 pattern per coarse halo cell
    tri = np.array([[[0.05, 0.05, 0.05], [0.1, 0.05, 0.05], [0.05, 0.1, 0.05]]])
    g = build_grid(
        [0, 0, 0], [1, 1, 1], tri, RefinementSpec(1 / 32, 1 / 16), root_cube_size=1.0, cells_per_edge=8
    )
    n, H = g.cells_per_edge, g.halo_width
    N = n + 2 * H
    arr = np.zeros((g.n_cubes, 1, N, N, N))
    # value = 1..8 keyed by cell-parity triple at the fine level; the mean of
    # any 2x2x2 block aligned to even coords is then exactly 4.5
    for c in g.cubes:
        if c.level != max(g.level_counts()):
            continue
        io = np.arange(n)
        P = (io[:, None, None] % 2) * 4 + (io[None, :, None] % 2) * 2 + (io[None, None, :] % 2) + 1.0
        arr[c.id, 0, H : H + n, H : H + n, H : H + n] = P
    exchange_halos(g, arr)
    fine_lvl = max(g.level_counts())
    checked = 0
    for c in g.cubes:
        if c.level != fine_lvl - 1:
            continue
        halos = arr[c.id, 0].copy()
        vals = halos[halos != 0.0]
        if len(vals):
            assert np.all(vals == 4.5)
            checked += len(vals)
    assert checked > 0


def test_exchange_rejects_unbalanced_grid():
    g = CubeGrid([0, 0, 0], [1, 1, 1], 1.0, cells_per_edge=8)
    # manually build an unbalanced leaf set: one leaf at level 0 next to level 2
    keys = set()
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                keys.add((1, cx, cy, cz))
    keys.discard((1, 0, 0, 0))
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                keys.add((2, cx, cy, cz))
    keys.discard((2, 0, 0, 0))
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                keys.add((3, cx, cy, cz))
    g._finalize(keys)
    arr = alloc(g)
    with pytest.raises(GridError):
        exchange_halos(g, arr)


# ------------------------------------------------------------------ partition
def test_partition_exact_division():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1, 1), root_cube_size=0.5, cells_per_edge=8)
    owner = partition(g, 4)
    counts = np.bincount(owner, minlength=4)
    assert list(counts) == [2, 2, 2, 2]


def test_partition_balanced_remainder():
    g = build_grid([0, 0, 0], [2.5, 1, 0.5], None, RefinementSpec(1, 1), root_cube_size=0.5, cells_per_edge=8)
    assert g.n_cubes == 10
    counts = sorted(np.bincount(partition(g, 4), minlength=4), reverse=True)
    assert counts == [3, 3, 2, 2]


def test_partition_deterministic_and_idle_warning():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1, 1), root_cube_size=0.5, cells_per_edge=8)
    a = partition(g, 3)
    b = partition(g, 3)
    assert np.array_equal(a, b)
    with pytest.warns(UserWarning):
        partition(g, g.n_cubes + 5)


@given(st.integers(min_value=1, max_value=40))
@settings(max_examples=25, deadline=None)
def test_partition_balance_property(workers):
    g = build_grid([0, 0, 0], [2.5, 1, 0.5], None, RefinementSpec(1, 1), root_cube_size=0.5, cells_per_edge=8)
    counts = np.bincount(partition(g, workers), minlength=workers)
    assert counts.max() - counts[counts > 0].min() <= 1 if (counts > 0).any() else True
    assert counts.sum() == g.n_cubes


# ---------------------------------------------------------------- cell lookup
def _lookup_oracle(grid, p):
    """Exhaustive scan: cells own (lo, hi] per axis, [lo, hi] at domain min."""
    best = None
    n = grid.cells_per_edge
    for c in grid.cubes:
        h = c.cell_spacing
        for ax in range(3):
            if not (c.origin[ax] <= p[ax] <= c.origin[ax] + c.edge):
                break
        else:
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        ok = True
                        for ax, idx in zip(range(3), (i, j, k)):
                            lo = c.origin[ax] + idx * h
                            hi = lo + h
                            at_min = abs(lo - grid.domain_lo[ax]) < 1e-300
                            if at_min:
                                ok &= lo <= p[ax] <= hi
                            else:
                                ok &= lo < p[ax] <= hi
                            if not ok:
                                break
                        if ok:
                            assert best is None, "oracle found two owning cells"
                            best = pack_cell_index(c.id, i, j, k, n)
    return best


def test_lookup_domain_min_corner():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1 / 8, 1 / 8), root_cube_size=0.5, cells_per_edge=4)
    packed = g.cell_lookup([0.0, 0.0, 0.0])
    cid, i, j, k = unpack_cell_index(packed, 4)
    assert (i, j, k) == (0, 0, 0)
    assert np.allclose(g.cubes[cid].origin, [0, 0, 0])


def test_lookup_interior_face_tie_to_lower():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1 / 8, 1 / 8), root_cube_size=0.5, cells_per_edge=4)
    packed = g.cell_lookup([0.5, 0.25, 0.25])
    cid, i, j, k = unpack_cell_index(packed, 4)
    assert g.cubes[cid].origin[0] == 0.0  # lower cube in x
    assert i == 3  # its top cell


def test_lookup_against_bruteforce_scan():
    tri = np.array([[[0.05, 0.05, 0.05], [0.1, 0.05, 0.05], [0.05, 0.1, 0.05]]])
    g = build_grid(
        [0, 0, 0], [1, 1, 1], tri, RefinementSpec(1 / 16, 1 / 8), root_cube_size=1.0, cells_per_edge=4
    )
    rng = np.random.default_rng(42)
    pts = rng.uniform(0, 1, size=(50, 3))
    # include exact boundary points
    pts = np.vstack([pts, [[0.5, 0.5, 0.5], [0.25, 0.1, 0.9], [1.0, 1.0, 1.0], [0.0, 0.7, 0.3]]])
    for p in pts:
        assert g.cell_lookup(p) == _lookup_oracle(g, p)


def test_lookup_outside_domain_errors():
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1 / 8, 1 / 8), root_cube_size=1.0, cells_per_edge=8)
    with pytest.raises(OutsideDomainError):
        g.cell_lookup([1.5, 0.5, 0.5])


def test_locate_cubes_vectorised_matches_scalar():
    tri = np.array([[[0.05, 0.05, 0.05], [0.1, 0.05, 0.05], [0.05, 0.1, 0.05]]])
    g = build_grid(
        [0, 0, 0], [1, 1, 1], tri, RefinementSpec(1 / 32, 1 / 16), root_cube_size=1.0, cells_per_edge=8
    )
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(500, 3))
    vec = g.locate_cubes(pts)
    for p, cid in zip(pts, vec):
        assert cid == g.locate_cube(p)
    outside = np.array([[2.0, 0, 0], [-0.1, 0.5, 0.5]])
    assert np.all(g.locate_cubes(outside) == -1)


def test_pack_unpack_bijective():
    n = 16
    rng = np.random.default_rng(0)
    for _ in range(200):
        cid = int(rng.integers(0, 5000))
        i, j, k = (int(x) for x in rng.integers(0, n, 3))
        assert unpack_cell_index(pack_cell_index(cid, i, j, k, n), n) == (cid, i, j, k)


def test_grid_outline_vtk_and_summary(tmp_path):
    g = build_grid([0, 0, 0], [1, 1, 1], None, RefinementSpec(1 / 16, 1 / 16), root_cube_size=0.5)
    path = tmp_path / "outline.vtk"
    g.write_outline_vtk(path)
    text = path.read_text()
    assert text.startswith("# vtk DataFile")
    assert f"CELL_TYPES {g.n_cubes}" in text
    s = g.summary()
    assert "cubes: 8" in s and "level 0" in s
