"""STL ingest tolerant of dirty CAD.

Both binary and ASCII layouts are read bit-exactly per the de-facto format:
80-byte header, little-endian uint32 triangle count, 50-byte records.  No
repair or connectivity is attempted; degenerate triangles are dropped and
counted.  Watertightness is never required downstream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..geom import triangle_areas

DEGENERATE_AREA_M2 = 1e-12


class StlParseError(ValueError):
    def __init__(self, message: str, byte_offset: int | None = None):
        self.byte_offset = byte_offset
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)


@dataclass
class WallTag:
    """Boundary data attached to triangles."""

    name: str = "wall"
    velocity_m_per_s: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature_K: float | None = None  # None = adiabatic
    kind: str = "wall"  # wall | inlet | outlet


@dataclass
class TriangleSoup:
    triangles: np.ndarray  # (m, 3, 3) float64, metres
    dropped_degenerate: int = 0
    tags: np.ndarray | None = None  # (m,) int indices into tag_table
    tag_table: list[WallTag] = field(default_factory=lambda: [WallTag()])

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.triangles.min(axis=(0, 1)), self.triangles.max(axis=(0, 1))

    def tag_of(self, tri_idx: np.ndarray) -> np.ndarray:
        if self.tags is None:
            return np.zeros(np.shape(tri_idx), dtype=np.int64)
        return self.tags[tri_idx]

    def merged_with(self, other: "TriangleSoup") -> "TriangleSoup":
        """Concatenate two soups, remapping the other's tag indices."""
        off = len(self.tag_table)
        tags_a = self.tag_of(np.arange(len(self)))
        tags_b = other.tag_of(np.arange(len(other))) + off
        return TriangleSoup(
            triangles=np.concatenate([self.triangles, other.triangles]),
            dropped_degenerate=self.dropped_degenerate + other.dropped_degenerate,
            tags=np.concatenate([tags_a, tags_b]),
            tag_table=self.tag_table + other.tag_table,
        )


def _filter_degenerate(tris: np.ndarray) -> tuple[np.ndarray, int]:
    if not len(tris):
        return tris.reshape(0, 3, 3), 0
    keep = triangle_areas(tris) > DEGENERATE_AREA_M2
    return tris[keep], int((~keep).sum())


def ingest_stl(path, default_tag: WallTag | None = None) -> TriangleSoup:
    """Load all parseable triangles from a binary or ASCII STL file."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 15:
        raise StlParseError("file too short to be an STL", len(raw))
    if raw[:5] == b"solid":
        try:
            tris = _parse_ascii(raw)
        except StlParseError:
            # many exporters write binary files with a 'solid' header
            tris = _parse_binary(raw)
    else:
        tris = _parse_binary(raw)
    tris, dropped = _filter_degenerate(tris)
    if len(tris) == 0:
        raise StlParseError(f"no usable triangles in {path}")
    soup = TriangleSoup(np.ascontiguousarray(tris, dtype=float), dropped)
    if default_tag is not None:
        soup.tag_table = [default_tag]
    return soup


def _parse_ascii(raw: bytes) -> np.ndarray:
    text = raw.decode("utf-8", errors="replace")
    verts: list[list[float]] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        tok = line.split()
        if tok[:1] == ["vertex"]:
            if len(tok) != 4:
                raise StlParseError("malformed vertex line", offset)
            try:
                verts.append([float(tok[1]), float(tok[2]), float(tok[3])])
            except ValueError:
                raise StlParseError("non-numeric vertex coordinate", offset) from None
        offset += len(line.encode("utf-8", errors="replace"))
    if len(verts) % 3 != 0:
        raise StlParseError(f"vertex count {len(verts)} not a multiple of 3", offset)
    return np.array(verts, dtype=float).reshape(-1, 3, 3)


def _parse_binary(raw: bytes) -> np.ndarray:
    if len(raw) < 84:
        raise StlParseError("binary STL truncated in header", len(raw))
    (count,) = struct.unpack_from("<I", raw, 80)
    need = 84 + 50 * count
    if len(raw) < need:
        # report the offset where the data ran out
        complete = (len(raw) - 84) // 50
        raise StlParseError(
            f"binary STL declares {count} triangles but data ends after {complete}",
            84 + 50 * complete,
        )
    rec = np.frombuffer(raw, dtype=np.uint8, count=50 * count, offset=84).reshape(count, 50)
    f32 = rec[:, :48].copy().view("<f4").reshape(count, 4, 3)
    return f32[:, 1:4, :].astype(float)


def write_ascii_stl(path, tris: np.ndarray, name: str = "part") -> None:
    tris = np.asarray(tris, dtype=float)
    with open(path, "w") as f:
        f.write(f"solid {name}\n")
        for t in tris:
            n = np.cross(t[1] - t[0], t[2] - t[0])
            mag = np.linalg.norm(n)
            n = n / mag if mag > 0 else n
            f.write(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
            f.write("    outer loop\n")
            for v in t:
                f.write(f"      vertex {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            f.write("    endloop\n  endfacet\n")
        f.write(f"endsolid {name}\n")


def write_binary_stl(path, tris: np.ndarray, header: bytes = b"") -> None:
    tris = np.asarray(tris, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(header.ljust(80, b"\0")[:80])
        f.write(struct.pack("<I", len(tris)))
        for t in tris:
            n = np.cross(t[1] - t[0], t[2] - t[0])
            mag = np.linalg.norm(n)
            if mag > 0:
                n = n / mag
            f.write(struct.pack("<3f", *n))
            for v in t:
                f.write(struct.pack("<3f", *v))
            f.write(struct.pack("<H", 0))


# ----------------------------------------------------------- shape generators
def box_tris(lo, hi, skip_faces: tuple[str, ...] = ()) -> np.ndarray:
    """12-triangle axis-aligned box; faces named x-, x+, y-, y+, z-, z+."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    v = np.array(
        [
            [lo[0], lo[1], lo[2]],
            [hi[0], lo[1], lo[2]],
            [hi[0], hi[1], lo[2]],
            [lo[0], hi[1], lo[2]],
            [lo[0], lo[1], hi[2]],
            [hi[0], lo[1], hi[2]],
            [hi[0], hi[1], hi[2]],
            [lo[0], hi[1], hi[2]],
        ]
    )
    faces = {
        "z-": [(0, 2, 1), (0, 3, 2)],
        "z+": [(4, 5, 6), (4, 6, 7)],
        "y-": [(0, 1, 5), (0, 5, 4)],
        "y+": [(3, 7, 6), (3, 6, 2)],
        "x-": [(0, 4, 7), (0, 7, 3)],
        "x+": [(1, 2, 6), (1, 6, 5)],
    }
    tris = []
    for name, idx in faces.items():
        if name in skip_faces:
            continue
        for a, b, c in idx:
            tris.append([v[a], v[b], v[c]])
    return np.array(tris)


def sphere_tris(center, radius: float, n_lat: int = 12, n_lon: int = 24) -> np.ndarray:
    """Watertight UV-sphere triangulation."""
    center = np.asarray(center, dtype=float)
    tris = []
    for i in range(n_lat):
        th0 = np.pi * i / n_lat
        th1 = np.pi * (i + 1) / n_lat
        for j in range(n_lon):
            ph0 = 2 * np.pi * j / n_lon
            ph1 = 2 * np.pi * (j + 1) / n_lon

            def pt(th, ph):
                return center + radius * np.array(
                    [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
                )

            a, b, c, d = pt(th0, ph0), pt(th1, ph0), pt(th1, ph1), pt(th0, ph1)
            if i > 0:
                tris.append([a, b, d])
            if i < n_lat - 1:
                tris.append([b, c, d])
    return np.array(tris)
