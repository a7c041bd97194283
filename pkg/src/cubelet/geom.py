"""Low-level triangle geometry kernels shared by the grid builder and the
immersed-boundary classifier.

All routines are vectorised over triangles with plain numpy; triangles are
arrays of shape (m, 3, 3) = (triangle, vertex, xyz), SI metres.
"""

from __future__ import annotations

import numpy as np

_EDGE_EPS = 1e-30


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    """Areas of (m, 3, 3) triangles."""
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def triangle_normals(tris: np.ndarray) -> np.ndarray:
    """Unit normals; degenerate triangles get a zero normal."""
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    mag = np.linalg.norm(n, axis=1, keepdims=True)
    return np.where(mag > _EDGE_EPS, n / np.maximum(mag, _EDGE_EPS), 0.0)


def triangle_aabbs(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return tris.min(axis=1), tris.max(axis=1)


def tri_box_overlap(tris: np.ndarray, box_lo: np.ndarray, box_hi: np.ndarray) -> np.ndarray:
    """Exact triangle / axis-aligned-box overlap (separating axis theorem).

    Returns a boolean mask over the m triangles for a single box.
    """
    tris = np.asarray(tris, dtype=float)
    center = 0.5 * (box_lo + box_hi)
    half = 0.5 * (box_hi - box_lo)
    v = tris - center  # (m,3,3)

    # axis tests: box axes
    lo, hi = v.min(axis=1), v.max(axis=1)
    ok = np.all((hi >= -half) & (lo <= half), axis=1)

    # triangle plane test
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    r = np.abs(n) @ half
    d = np.einsum("ij,ij->i", n, v[:, 0])
    ok &= np.abs(d) <= r + 1e-300

    # 9 cross-axis tests a = e_i x f_j
    f = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1)  # (m,3,3)
    for j in range(3):  # edge index
        fj = f[:, j]
        for i in range(3):  # box axis
            a = np.zeros_like(fj)
            a[:, (i + 1) % 3] = -fj[:, (i + 2) % 3]
            a[:, (i + 2) % 3] = fj[:, (i + 1) % 3]
            p = np.einsum("mk,mvk->mv", a, v)  # (m,3)
            ra = np.abs(a) @ half
            ok &= ~((p.min(axis=1) > ra) | (p.max(axis=1) < -ra))
    return ok


def boxes_tri_overlap(tri: np.ndarray, centers: np.ndarray, half: np.ndarray) -> np.ndarray:
    """SAT overlap of one triangle against many equal-size axis-aligned boxes.

    tri: (3, 3); centers: (k, 3); half: (3,) half-extents.  Returns (k,) bool.
    """
    tri = np.asarray(tri, dtype=float)
    half = np.asarray(half, dtype=float)
    v = tri[None, :, :] - centers[:, None, :]  # (k,3,3)

    lo, hi = v.min(axis=1), v.max(axis=1)
    ok = np.all((hi >= -half) & (lo <= half), axis=1)

    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    r = np.abs(n) @ half
    d = np.einsum("j,kj->k", n, v[:, 0])
    ok &= np.abs(d) <= r + 1e-300

    f = np.stack([tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]])  # (3,3)
    for j in range(3):
        fj = f[j]
        for i in range(3):
            a = np.zeros(3)
            a[(i + 1) % 3] = -fj[(i + 2) % 3]
            a[(i + 2) % 3] = fj[(i + 1) % 3]
            p = np.einsum("j,kvj->kv", a, v)  # (k,3)
            ra = np.abs(a) @ half
            ok &= ~((p.min(axis=1) > ra) | (p.max(axis=1) < -ra))
    return ok


def ray_x_crossings(tris: np.ndarray, origin_yz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intersections of the +x ray bundle through points (y, z) with triangles.

    origin_yz: (p, 2) ray anchor coordinates; rays run along +x from x = -inf.
    Returns (hit_x, degenerate) where hit_x is a list-like object: for
    simplicity we return the (p, m) matrices of crossing x and validity mask.
    Intended for modest p*m sizes (classification works cube-locally).
    """
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    d = np.array([1.0, 0.0, 0.0])
    pvec = np.cross(d, e2)  # (m,3)
    det = np.einsum("mj,mj->m", e1, pvec)
    near_parallel = np.abs(det) < 1e-14
    inv_det = np.where(near_parallel, 0.0, 1.0 / np.where(near_parallel, 1.0, det))

    p = origin_yz.shape[0]
    m = tris.shape[0]
    # ray origins at x = 0 plane; t is then the crossing x coordinate
    orig = np.zeros((p, 3))
    orig[:, 1:] = origin_yz
    tvec = orig[:, None, :] - v0[None, :, :]  # (p,m,3)
    u = np.einsum("pmj,mj->pm", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None, :, :])
    vv = np.einsum("pmj,j->pm", qvec, d) * inv_det
    t = np.einsum("pmj,mj->pm", qvec, e2) * inv_det
    eps = 1e-12
    valid = (~near_parallel) & (u >= -eps) & (vv >= -eps) & (u + vv <= 1.0 + eps)
    grazing = valid & ((np.abs(u) < eps) | (np.abs(vv) < eps) | (np.abs(1.0 - u - vv) < eps))
    return np.where(valid, t, np.nan), grazing


def closest_point_on_triangles(points: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest points on each triangle for each query point.

    points: (p, 3); tris: (m, 3, 3).  Returns (closest (p, m, 3), dist2 (p, m)).
    Classic region-based projection (Eberly), vectorised.
    """
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab = b - a
    ac = c - a
    ap = points[:, None, :] - a[None, :, :]

    d1 = np.einsum("mj,pmj->pm", ab, ap)
    d2 = np.einsum("mj,pmj->pm", ac, ap)
    bp = points[:, None, :] - b[None, :, :]
    d3 = np.einsum("mj,pmj->pm", ab, bp)
    d4 = np.einsum("mj,pmj->pm", ac, bp)
    cp = points[:, None, :] - c[None, :, :]
    d5 = np.einsum("mj,pmj->pm", ab, cp)
    d6 = np.einsum("mj,pmj->pm", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom_v = vb + vc + va

    with np.errstate(divide="ignore", invalid="ignore"):
        v_edge_ab = np.clip(np.where(d1 - d3 != 0.0, d1 / (d1 - d3), 0.0), 0.0, 1.0)
        w_edge_ac = np.clip(np.where(d2 - d6 != 0.0, d2 / (d2 - d6), 0.0), 0.0, 1.0)
        num_bc = d4 - d3
        w_edge_bc = np.clip(
            np.where((num_bc + (d5 - d6)) != 0.0, num_bc / (num_bc + (d5 - d6)), 0.0), 0.0, 1.0
        )
        v_in = np.where(denom_v != 0.0, vb / np.where(denom_v == 0.0, 1.0, denom_v), 0.0)
        w_in = np.where(denom_v != 0.0, vc / np.where(denom_v == 0.0, 1.0, denom_v), 0.0)

    # start from interior projection, then overwrite by region
    close = a[None] + v_in[..., None] * ab[None] + w_in[..., None] * ac[None]

    reg_bc = (d4 - d3 >= 0) & (d5 - d6 >= 0) & (va <= 0)
    cand = b[None] + w_edge_bc[..., None] * (c - b)[None]
    close = np.where(reg_bc[..., None], cand, close)

    reg_ac = (d2 >= 0) & (d6 <= 0) & (vb <= 0)
    cand = a[None] + w_edge_ac[..., None] * ac[None]
    close = np.where(reg_ac[..., None], cand, close)

    reg_ab = (d1 >= 0) & (d3 <= 0) & (vc <= 0)
    cand = a[None] + v_edge_ab[..., None] * ab[None]
    close = np.where(reg_ab[..., None], cand, close)

    reg_c = (d6 >= 0) & (d5 <= d6)
    close = np.where(reg_c[..., None], c[None] * np.ones_like(close), close)
    reg_b = (d3 >= 0) & (d4 <= d3)
    close = np.where(reg_b[..., None], b[None] * np.ones_like(close), close)
    reg_a = (d1 <= 0) & (d2 <= 0)
    close = np.where(reg_a[..., None], a[None] * np.ones_like(close), close)

    diff = points[:, None, :] - close
    return close, np.einsum("pmj,pmj->pm", diff, diff)


def segment_triangle_hits(p0: np.ndarray, p1: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """First-hit parameter s in [0, 1] of segments p0->p1 against triangles.

    p0, p1: (p, 3).  Returns (p,) array of min hit parameter, inf if no hit.
    """
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    d = p1 - p0  # (p,3)
    pvec = np.cross(d[:, None, :], e2[None, :, :])  # (p,m,3)
    det = np.einsum("mj,pmj->pm", e1, pvec)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = p0[:, None, :] - v0[None, :, :]
    u = np.einsum("pmj,pmj->pm", tvec, pvec) * inv
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("pj,pmj->pm", d, qvec) * inv
    s = np.einsum("mj,pmj->pm", e2, qvec) * inv
    eps = 1e-12
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (s >= -eps) & (s <= 1 + eps)
    s = np.where(hit, np.clip(s, 0.0, 1.0), np.inf)
    return s.min(axis=1)


class TriangleIndex:
    """Uniform spatial hash over triangle bounding boxes for range queries."""

    def __init__(self, tris: np.ndarray, cell_size: float):
        self.tris = np.asarray(tris, dtype=float)
        self.cell = float(cell_size)
        lo, hi = triangle_aabbs(self.tris)
        self.lo = lo.min(axis=0) if len(tris) else np.zeros(3)
        self._buckets: dict[tuple[int, int, int], list[int]] = {}
        for t in range(len(self.tris)):
            i0 = np.floor((lo[t] - self.lo) / self.cell).astype(int)
            i1 = np.floor((hi[t] - self.lo) / self.cell).astype(int)
            for ix in range(i0[0], i1[0] + 1):
                for iy in range(i0[1], i1[1] + 1):
                    for iz in range(i0[2], i1[2] + 1):
                        self._buckets.setdefault((ix, iy, iz), []).append(t)

    def query_box(self, box_lo: np.ndarray, box_hi: np.ndarray) -> np.ndarray:
        """Candidate triangle ids whose AABB may intersect [box_lo, box_hi]."""
        if not len(self.tris):
            return np.empty(0, dtype=int)
        i0 = np.floor((np.asarray(box_lo) - self.lo) / self.cell).astype(int)
        i1 = np.floor((np.asarray(box_hi) - self.lo) / self.cell).astype(int)
        out: set[int] = set()
        for ix in range(i0[0], i1[0] + 1):
            for iy in range(i0[1], i1[1] + 1):
                for iz in range(i0[2], i1[2] + 1):
                    out.update(self._buckets.get((ix, iy, iz), ()))
        return np.fromiter(out, dtype=int, count=len(out))
