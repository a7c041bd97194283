"""mesh -> run -> risk orchestration."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .. import vars as V
from ..droplets import DropletTracker, EmissionSpec, read_snapshot_csv, write_snapshot_csv
from ..flow import Domain, FlowSolver
from ..flow.io import load_restart, save_restart, write_field_vtk
from ..grid import RefinementSpec, build_grid
from ..ibm import IbmMask, TriangleSoup, WallCondition, classify_cells, ingest_stl
from ..pool import default_workers
from ..risk import BreathingZone, build_risk_matrix, zone_exposure
from .config import ScenarioConfig


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _inventory(out_dir: Path, files: list[Path]) -> dict:
    return {str(p.relative_to(out_dir)): _sha256(p) for p in files}


def load_geometry(cfg: ScenarioConfig) -> TriangleSoup | None:
    soup = None
    for ent in cfg.geometry:
        s = ingest_stl(ent["path"], default_tag=ent["tag"])
        soup = s if soup is None else soup.merged_with(s)
    return soup


def build_scene(cfg: ScenarioConfig):
    """Grid + mask + wall table shared by mesh and run."""
    soup = load_geometry(cfg)
    g = cfg.grid_cfg
    grid = build_grid(
        cfg.domain_lo,
        cfg.domain_hi,
        soup.triangles if soup is not None else None,
        RefinementSpec(
            wall_spacing_m=g["wall_spacing_m"],
            far_spacing_m=g["far_spacing_m"],
            wall_band_m=g["wall_band_m"],
            max_level=g["max_level"],
        ),
        root_cube_size=g["root_cube_size_m"],
        cells_per_edge=g["cells_per_edge"],
        halo_width=g["halo_width"],
    )
    mask = classify_cells(grid, soup) if soup is not None else None
    walls = [WallCondition.from_tag(t) for t in (soup.tag_table if soup else [])] or [
        WallCondition()
    ]
    return soup, grid, mask, walls


def cmd_mesh(cfg: ScenarioConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    soup, grid, mask, _ = build_scene(cfg)
    wall = time.perf_counter() - t0
    files = []
    summary = out / "grid_summary.txt"
    summary.write_text(grid.summary() + "\n")
    files.append(summary)
    outline = out / "cube_outlines.vtk"
    grid.write_outline_vtk(outline)
    files.append(outline)
    if mask is not None:
        mfile = out / "ibm_mask.vtk"
        _write_mask_vtk(grid, mask, mfile)
        files.append(mfile)
    manifest = {
        "config_hash": cfg.config_hash(),
        "name": cfg.name,
        "preprocessing_wall_s": wall,
        "cubes": grid.n_cubes,
        "cells": grid.total_cells(),
        "levels": {str(k): v for k, v in grid.level_counts().items()},
        "triangles": 0 if soup is None else len(soup),
        "dropped_degenerate": 0 if soup is None else soup.dropped_degenerate,
        "mask_counts": mask.counts if mask is not None else {},
    }
    manifest["outputs"] = _inventory(out, files)
    mpath = out / "mesh_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _write_mask_vtk(grid, mask: IbmMask, path) -> None:
    n, H = grid.cells_per_edge, grid.halo_width
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\nibm mask (cell class per cube)\nASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        # centroids of solid/ghost cells as points, class as scalar
        pts = []
        cls = []
        for c in grid.cubes:
            w = mask.cells[c.id, H : H + n, H : H + n, H : H + n]
            idx = np.argwhere(w > 0)
            for q in idx:
                pts.append(c.origin + (q + 0.5) * c.cell_spacing)
                cls.append(int(w[tuple(q)]))
        f.write(f"POINTS {len(pts)} double\n")
        for p in pts:
            f.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        f.write(f"CELLS {len(pts)} {2 * len(pts)}\n")
        for i in range(len(pts)):
            f.write(f"1 {i}\n")
        f.write(f"CELL_TYPES {len(pts)}\n")
        for _ in pts:
            f.write("1\n")
        f.write(f"CELL_DATA {len(pts)}\nSCALARS cell_class int 1\nLOOKUP_TABLE default\n")
        for v in cls:
            f.write(f"{v}\n")


def _emission_spec(cfg: ScenarioConfig, ec: dict) -> EmissionSpec:
    if ec["subject"] is not None:
        sub = next(s for s in cfg.subjects if s["name"] == ec["subject"])
        source = sub["nose_m"]
        direction = sub["forward"]
    else:
        source = ec["source_m"]
        direction = ec["direction"] or [1.0, 0.0, 0.0]
    return EmissionSpec(
        source_m=tuple(source),
        direction=tuple(direction),
        event=ec["event"],
        count=int(ec["count"]),
        geometric_mean_m=float(ec["geometric_mean_diameter_m"]),
        geometric_sigma=float(ec["geometric_sigma"]),
        diameters_m=None if ec["diameters_m"] is None else tuple(ec["diameters_m"]),
        speed_m_per_s=float(ec["speed_m_per_s"]),
        spread_deg=float(ec["spread_deg"]),
        temperature_K=float(ec["temperature_K"]),
        period_s=ec["period_s"],
        start_s=float(ec["start_s"]),
    )


def run_single(
    cfg: ScenarioConfig,
    out_dir,
    emitter: str | None = None,
    resume: str | None = None,
    mesh_hash: str | None = None,
) -> dict:
    """One simulation; emitter overrides emission anchoring in multi-run mode."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mesh_hash is not None and mesh_hash != cfg.config_hash():
        raise ValueError(
            f"mesh artifacts were built from config {mesh_hash}, "
            f"current config is {cfg.config_hash()}"
        )
    phases = {}
    t0 = time.perf_counter()
    soup, grid, mask, walls = build_scene(cfg)
    phases["mesh_s"] = time.perf_counter() - t0

    workers = cfg.run_cfg["workers"] or default_workers()
    dom = Domain.from_grid(grid, cfg.bcs)
    solver = FlowSolver(
        dom,
        cfg.gas,
        dt=cfg.run_cfg["dt_s"],
        settings=cfg.inner,
        mask=mask,
        wall_table=walls,
        n_workers=workers,
    )
    amb = cfg.ambient
    init_vals = [amb["P"], amb["u"][0], amb["u"][1], amb["u"][2], amb["T"]] + [
        amb["Y"]
    ] * cfg.gas.n_species
    solver.set_state(init_vals)

    seed = cfg.run_cfg["seed"]
    tracker = DropletTracker(
        grid, solver, mask=mask, soup=soup, seed=seed, particle_cfl=cfg.run_cfg["particle_cfl"]
    )

    # emission schedule: explicit events plus periodic repetitions
    specs = []
    for ec in cfg.emissions:
        if cfg.risk_cfg["multi_run"] and emitter is not None and ec["subject"] is not None:
            ec = dict(ec)
            ec["subject"] = emitter
        specs.append(_emission_spec(cfg, ec))


    dt = cfg.run_cfg["dt_s"]
    n_steps = int(round(cfg.run_cfg["duration_s"] / dt)) if cfg.run_cfg["duration_s"] > 0 else 0
    files: list[Path] = []
    residual_history = []
    snap_every = cfg.run_cfg["snapshot_every_steps"]
    fsnap_every = cfg.run_cfg["field_snapshot_every_steps"]
    restart_every = cfg.run_cfg["restart_every_steps"]

    def write_particles(step):
        path = out / f"particles_{step:06d}.csv"
        write_snapshot_csv(path, tracker.sets.snapshot(), tracker.time)
        files.append(path)

    emitted_events: set = set()
    if resume is not None:
        header = load_restart(solver, resume)
        if header.get("extra"):
            meta = tracker.load_state_bytes(header["extra"])
            emitted_events = {tuple(e) for e in meta.get("emitted_events", [])}
        tracker.time = solver.time

    def fire_emissions():
        t = solver.time
        for k, spec in enumerate(specs):
            times = [spec.start_s]
            if spec.period_s:
                nrep = int((cfg.run_cfg["duration_s"] - spec.start_s) / spec.period_s) + 1
                times = [spec.start_s + q * spec.period_s for q in range(nrep)]
            for q, te in enumerate(times):
                key = (k, q)
                if key not in emitted_events and te <= t + 1e-12:
                    emitted_events.add(key)
                    tracker.emit(spec)

    t0 = time.perf_counter()
    if solver.step_index == 0:
        fire_emissions()
        write_particles(0)
    loop_start = solver.step_index
    diverged = None
    for step in range(loop_start, n_steps):
        solver.sources[:, V.Y0 :] = 0.0
        fire_emissions()
        tracker.step(dt)  # droplet sub-steps deposit vapor sources for this dt
        st = solver.advance()
        residual_history.append(
            [st.step, st.inner_iterations, st.first_residual, st.last_residual]
        )
        done = step + 1
        if snap_every and done % snap_every == 0:
            write_particles(done)
        if fsnap_every and done % fsnap_every == 0:
            files.extend(out / f for f in write_field_vtk(solver, out, f"field_{done:06d}"))
        if restart_every and done % restart_every == 0:
            rp = out / "restart_latest.rst"
            save_restart(
                solver, rp, tracker.state_bytes({"emitted_events": sorted(emitted_events)})
            )
            if rp not in files:
                files.append(rp)
    phases["run_s"] = time.perf_counter() - t0
    if n_steps == 0:
        pass  # initial snapshot only
    elif not snap_every or (n_steps % snap_every):
        write_particles(n_steps)
    rp = out / "restart_final.rst"
    save_restart(solver, rp, tracker.state_bytes({"emitted_events": sorted(emitted_events)}))
    files.append(rp)

    counts = tracker.sets.counts()
    manifest = {
        "config_hash": cfg.config_hash(),
        "name": cfg.name,
        "emitter": emitter,
        "seed": seed,
        "workers": workers,
        "steps": n_steps,
        "dt_s": dt,
        "phase_wall_s": phases,
        "residual_history": residual_history,
        "particle_counts": counts,
        "mass_evaporated_kg": tracker.mass_evaporated_total,
        "final_mass_total_kg": float(
            (solver.dom.interior(solver.U)[:, V.RHO] * solver.dom.cell_volumes()[:, None, None, None]).sum()
        ),
        "timers_s": {k: round(v, 6) for k, v in solver.timers.items()},
    }
    manifest["outputs"] = _inventory(out, files)
    mpath = out / "run_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    solver.pool.close()
    return manifest


def cmd_run(cfg: ScenarioConfig, out_dir, resume: str | None = None, mesh_hash=None) -> dict:
    out = Path(out_dir)
    if cfg.risk_cfg["multi_run"]:
        if resume is not None:
            raise ValueError("resume is only supported for single runs")
        results = {}
        for sub in cfg.subjects:
            results[sub["name"]] = run_single(
                cfg, out / f"emitter_{sub['name']}", emitter=sub["name"], mesh_hash=mesh_hash
            )
        index = {
            "config_hash": cfg.config_hash(),
            "runs": {k: f"emitter_{k}" for k in results},
        }
        (out / "multi_run_index.json").write_text(json.dumps(index, indent=2, sort_keys=True))
        return index
    return run_single(cfg, out, resume=resume, mesh_hash=mesh_hash)


def _collect_snapshots(run_dir: Path):
    snaps = []
    for p in sorted(run_dir.glob("particles_*.csv")):
        t, snap = read_snapshot_csv(p)
        snaps.append((t, snap))
    return snaps


def cmd_risk(cfg: ScenarioConfig, run_dir, out_dir) -> dict:
    run_dir = Path(run_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [s["name"] for s in cfg.subjects]
    if not names:
        raise ValueError("risk evaluation needs subjects in the config")
    zones = {
        s["name"]: BreathingZone.at_nose(
            s["nose_m"], tuple(s["zone_size_m"]), tuple(s["forward"]), s["name"]
        )
        for s in cfg.subjects
    }
    window = cfg.risk_cfg["window_s"] or [0.0, cfg.run_cfg["duration_s"]]

    emitters = {}
    if (run_dir / "multi_run_index.json").exists():
        index = json.loads((run_dir / "multi_run_index.json").read_text())
        if index["config_hash"] != cfg.config_hash():
            raise ValueError("run artifacts were produced by a different config")
        for name, sub in index["runs"].items():
            emitters[name] = run_dir / sub
    else:
        man = json.loads((run_dir / "run_manifest.json").read_text())
        if man["config_hash"] != cfg.config_hash():
            raise ValueError("run artifacts were produced by a different config")
        emitters[man.get("emitter") or (names[0] if names else "source")] = run_dir

    exposures = {}
    for emitter, rdir in emitters.items():
        snaps = _collect_snapshots(rdir)
        if not snaps:
            raise FileNotFoundError(f"no particle snapshots under {rdir}")
        row = {}
        for name, zone in zones.items():
            if name == emitter:
                continue
            rec = zone_exposure(
                snaps, zone, tuple(window), cfg.risk_cfg["B"], cfg.risk_cfg["rho_v_per_m3"]
            )
            row[name] = rec.virion_count(quasi_steady=cfg.risk_cfg["quasi_steady"])
        exposures[emitter] = row

    if len(emitters) == 1 and len(names) > 1 and not cfg.risk_cfg["multi_run"]:
        # single-run configs give a one-row report, not a full matrix
        only = next(iter(exposures))
        payload = {
            "emitter": only,
            "virions": exposures[only],
            "probability": {
                k: float(1 - np.exp(-v / cfg.risk_cfg["N0"])) for k, v in exposures[only].items()
            },
        }
        (out / "risk_row.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
        return payload

    matrix = build_risk_matrix(names, exposures, cfg.risk_cfg["N0"])
    matrix.write_csv(out / "risk_matrix.csv")
    matrix.write_long_csv(out / "risk_matrix_long.csv")
    matrix.write_json(
        out / "risk_summary.json",
        extra={
            "config_hash": cfg.config_hash(),
            "breathing_rate_m3_per_s": cfg.risk_cfg["B"],
            "viral_load_per_m3": cfg.risk_cfg["rho_v_per_m3"],
            "infectious_dose_virions": cfg.risk_cfg["N0"],
            "window_s": list(window),
        },
    )
    return json.loads((out / "risk_summary.json").read_text())
