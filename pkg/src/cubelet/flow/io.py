"""Restart dumps and field snapshots.

Restart files are versioned little-endian binary: magic "CUBELET1", a JSON
header (shapes, step, time), then the raw conservative state and both BDF
history levels.  Snapshots are legacy ASCII VTK structured-points files, one
per cube, tied together by a plain-text multiblock index.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .. import vars as V
from .solver import FlowSolver

MAGIC = b"CUBELET1"


def save_restart(solver: FlowSolver, path, extra: bytes = b"") -> None:
    """Versioned little-endian dump of U, both history levels and the cached
    primitives, plus an opaque extra payload (particle state etc.)."""
    header = {
        "version": 1,
        "step": solver.step_index,
        "time": solver.time,
        "nv": solver.nv,
        "shape": list(solver.U.shape),
        "dt": solver.dt,
        "extra_len": len(extra),
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        for arr in (solver.U, solver.Un, solver.Unm1, solver.W):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if extra:
            f.write(extra)


def load_restart(solver: FlowSolver, path) -> dict:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a restart file (magic {magic!r})")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        if tuple(header["shape"]) != solver.U.shape:
            raise ValueError(
                f"restart shape {header['shape']} does not match solver {solver.U.shape}"
            )
        count = int(np.prod(solver.U.shape))
        for arr in (solver.U, solver.Un, solver.Unm1, solver.W):
            data = np.frombuffer(f.read(count * 8), dtype="<f8", count=count)
            arr[...] = data.reshape(solver.U.shape)
        extra = f.read(int(header.get("extra_len", 0)))
    solver.step_index = int(header["step"])
    solver.time = float(header["time"])
    solver._sync()
    header["extra"] = extra
    return header


def write_field_vtk(solver: FlowSolver, out_dir, basename: str = "field") -> list[str]:
    """One legacy VTK structured-points file per cube plus an index file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dom = solver.dom
    gas = solver.gas
    files = []
    names = ["pressure_Pa", "u_m_per_s", "v_m_per_s", "w_m_per_s", "temperature_K"] + [
        f"Y{k}" for k in range(gas.n_species)
    ]
    Wi = dom.interior(solver.W)
    for b in range(dom.nc):
        fname = f"{basename}_cube{b:05d}.vtk"
        path = out / fname
        h = dom.h[b]
        o = dom.origins[b]
        with open(path, "w") as f:
            f.write("# vtk DataFile Version 3.0\n")
            f.write(f"cube {b} step {solver.step_index}\nASCII\n")
            f.write("DATASET STRUCTURED_POINTS\n")
            f.write(f"DIMENSIONS {dom.nx + 1} {dom.ny + 1} {dom.nz + 1}\n")
            f.write(f"ORIGIN {o[0]:.9g} {o[1]:.9g} {o[2]:.9g}\n")
            f.write(f"SPACING {h:.9g} {h:.9g} {h:.9g}\n")
            f.write(f"CELL_DATA {dom.nx * dom.ny * dom.nz}\n")
            for ivar, name in enumerate(names):
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                vals = Wi[b, ivar].transpose(2, 1, 0).ravel()  # VTK is x-fastest
                f.write("\n".join(f"{v:.9g}" for v in vals))
                f.write("\n")
        files.append(fname)
    index = out / f"{basename}.index"
    with open(index, "w") as f:
        f.write(f"# multiblock index, step {solver.step_index}, time {solver.time:.9g}\n")
        for fname in files:
            f.write(fname + "\n")
    return files + [index.name]
