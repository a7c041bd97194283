"""Per-cube particle storage with a global-id hash table.

Live droplets are grouped into one structure-of-arrays set per cube so that
all per-cube work vectorises and migration is a move between sets.  The hash
table maps a particle's global id to its (cube, slot) and stays bijective
with the live population; removals swap the last slot in and update the
moved particle's entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AIRBORNE = 0
NUCLEATED = 1
DEPOSITED_WALL = 2
EXITED = 3

STATUS_NAMES = {0: "AIRBORNE", 1: "NUCLEATED", 2: "DEPOSITED_WALL", 3: "EXITED"}

_COLUMNS = ("id", "pos", "vel", "d", "T", "m", "d0", "t_emit", "nucleated")


def _empty_set():
    return {
        "id": np.empty(0, dtype=np.int64),
        "pos": np.empty((0, 3)),
        "vel": np.empty((0, 3)),
        "d": np.empty(0),
        "T": np.empty(0),
        "m": np.empty(0),
        "d0": np.empty(0),
        "t_emit": np.empty(0),
        "nucleated": np.empty(0, dtype=bool),
    }


@dataclass
class TerminalRecord:
    id: int
    status: int
    pos: tuple
    d: float
    T: float
    m: float
    d0: float
    time: float


class ParticleSets:
    def __init__(self):
        self.by_cube: dict[int, dict] = {}
        self.index: dict[int, tuple[int, int]] = {}  # id -> (cube, slot)
        self.terminal: list[TerminalRecord] = []
        self._next_id = 0
        self.total_emitted = 0

    # ------------------------------------------------------------------ sizes
    def live_count(self) -> int:
        return sum(len(s["id"]) for s in self.by_cube.values())

    def counts(self) -> dict[str, int]:
        nuc = sum(int(s["nucleated"].sum()) for s in self.by_cube.values())
        live = self.live_count()
        out = {
            "AIRBORNE": live - nuc,
            "NUCLEATED": nuc,
            "DEPOSITED_WALL": 0,
            "EXITED": 0,
        }
        for t in self.terminal:
            out[STATUS_NAMES[t.status]] += 1
        return out

    # ----------------------------------------------------------------- insert
    def allocate_ids(self, n: int) -> np.ndarray:
        ids = np.arange(self._next_id, self._next_id + n, dtype=np.int64)
        self._next_id += n
        self.total_emitted += n
        return ids

    def append(self, cube: int, cols: dict) -> None:
        s = self.by_cube.setdefault(cube, _empty_set())
        base = len(s["id"])
        for key in _COLUMNS:
            s[key] = np.concatenate([s[key], cols[key]])
        ids = cols["id"].tolist()
        self.index.update({pid: (cube, base + k) for k, pid in enumerate(ids)})

    # ----------------------------------------------------------------- remove
    def remove_slots(self, cube: int, slots: np.ndarray) -> dict:
        """Remove (and return) rows at the given slots of one cube set."""
        s = self.by_cube[cube]
        slots = np.asarray(slots, dtype=np.int64)
        removed = {k: s[k][slots].copy() for k in _COLUMNS}
        keep = np.ones(len(s["id"]), dtype=bool)
        keep[slots] = False
        for pid in s["id"][slots].tolist():
            del self.index[pid]
        for k in _COLUMNS:
            s[k] = s[k][keep]
        self.index.update({pid: (cube, k) for k, pid in enumerate(s["id"].tolist())})
        if len(s["id"]) == 0:
            del self.by_cube[cube]
        return removed

    def retire(self, cols: dict, status: int, time: float) -> None:
        for i in range(len(cols["id"])):
            self.terminal.append(
                TerminalRecord(
                    id=int(cols["id"][i]),
                    status=status,
                    pos=tuple(cols["pos"][i]),
                    d=float(cols["d"][i]),
                    T=float(cols["T"][i]),
                    m=float(cols["m"][i]),
                    d0=float(cols["d0"][i]),
                    time=time,
                )
            )

    # ------------------------------------------------------------- integrity
    def check_hash_integrity(self) -> bool:
        n = 0
        for cube, s in self.by_cube.items():
            for slot, pid in enumerate(s["id"]):
                if self.index.get(int(pid)) != (cube, slot):
                    return False
                n += 1
        return n == len(self.index)

    # -------------------------------------------------------------- snapshot
    def snapshot(self) -> dict:
        """Flat arrays over live + terminal particles for exposure analysis."""
        ids, status, pos, d, T, m, d0 = [], [], [], [], [], [], []
        for cube in sorted(self.by_cube):
            s = self.by_cube[cube]
            ids.append(s["id"])
            status.append(np.where(s["nucleated"], NUCLEATED, AIRBORNE))
            pos.append(s["pos"])
            d.append(s["d"])
            T.append(s["T"])
            m.append(s["m"])
            d0.append(s["d0"])
        for t in self.terminal:
            ids.append(np.array([t.id], dtype=np.int64))
            status.append(np.array([t.status]))
            pos.append(np.array([t.pos]))
            d.append(np.array([t.d]))
            T.append(np.array([t.T]))
            m.append(np.array([t.m]))
            d0.append(np.array([t.d0]))
        if not ids:
            return {
                "id": np.empty(0, dtype=np.int64),
                "status": np.empty(0, dtype=np.int64),
                "pos": np.empty((0, 3)),
                "d": np.empty(0),
                "T": np.empty(0),
                "m": np.empty(0),
                "d0": np.empty(0),
            }
        return {
            "id": np.concatenate(ids),
            "status": np.concatenate(status).astype(np.int64),
            "pos": np.concatenate(pos).reshape(-1, 3),
            "d": np.concatenate(d),
            "T": np.concatenate(T),
            "m": np.concatenate(m),
            "d0": np.concatenate(d0),
        }


def write_snapshot_csv(path, snap: dict, time: float) -> None:
    with open(path, "w") as f:
        f.write(f"# time_s={time:.9g}\n")
        f.write("id,status,x_m,y_m,z_m,d_m,T_K,m_kg,d0_m\n")
        for i in range(len(snap["id"])):
            p = snap["pos"][i]
            f.write(
                f"{snap['id'][i]},{STATUS_NAMES[int(snap['status'][i])]},"
                f"{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},"
                f"{snap['d'][i]:.9g},{snap['T'][i]:.9g},{snap['m'][i]:.9g},{snap['d0'][i]:.9g}\n"
            )


def read_snapshot_csv(path) -> tuple[float, dict]:
    inv = {v: k for k, v in STATUS_NAMES.items()}
    with open(path) as f:
        header = f.readline()
        time = float(header.split("=", 1)[1])
        f.readline()
        rows = [line.strip().split(",") for line in f if line.strip()]
    n = len(rows)
    snap = {
        "id": np.array([int(r[0]) for r in rows], dtype=np.int64),
        "status": np.array([inv[r[1]] for r in rows], dtype=np.int64),
        "pos": np.array([[float(r[2]), float(r[3]), float(r[4])] for r in rows]).reshape(-1, 3),
        "d": np.array([float(r[5]) for r in rows]),
        "T": np.array([float(r[6]) for r in rows]),
        "m": np.array([float(r[7]) for r in rows]),
        "d0": np.array([float(r[8]) for r in rows]),
    }
    return time, snap


def write_snapshot_vtk(path, snap: dict) -> None:
    """Legacy VTK point cloud of live/terminal particles."""
    n = len(snap["id"])
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\ndroplets\nASCII\nDATASET POLYDATA\n")
        f.write(f"POINTS {n} double\n")
        for p in snap["pos"]:
            f.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        f.write(f"POINT_DATA {n}\nSCALARS diameter_m double 1\nLOOKUP_TABLE default\n")
        for v in snap["d"]:
            f.write(f"{v:.9g}\n")
        f.write("SCALARS status int 1\nLOOKUP_TABLE default\n")
        for v in snap["status"]:
            f.write(f"{int(v)}\n")
