"""Benchmark harness: cavity weak/strong scaling and kernel cost shares.

Weak scaling follows the cavity protocol: the domain grows along y in
proportion to the worker count so per-worker load is constant, and
efficiency is T(1)/T(w) of the average step wall time.  The kernel suite
times the convective and viscous flux kernels separately (single worker so
attribution is exact) and reports their share of the step.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np

from ..flow import BCSpec, Domain, FlowSolver, GasModel, InnerSettings
from ..grid import RefinementSpec, build_grid


def _cavity_solver(ny_cubes: int, workers: int, cpe: int = 16, order: int = 2) -> FlowSolver:
    T0, P0 = 300.0, 101325.0
    gas0 = GasModel(gravity=(0, 0, 0))
    c = gas0.sound_speed(T0)
    U = 0.05 * c
    rho = P0 / (gas0.R * T0)
    mu = rho * U * 1.0 / 1000.0
    gas = GasModel(gravity=(0, 0, 0), constant_mu=mu, schmidt=(1.0,))
    edge = 0.5
    grid = build_grid(
        [0, 0, 0],
        [2 * edge, ny_cubes * edge, edge],
        None,
        RefinementSpec(edge / cpe, edge / cpe),
        root_cube_size=edge,
        cells_per_edge=cpe,
        halo_width=2,
    )
    bcs = {
        "x-": BCSpec("wall"),
        "x+": BCSpec("wall"),
        "y-": BCSpec("wall"),
        "y+": BCSpec("wall"),
        "z-": BCSpec("wall"),
        "z+": BCSpec("wall", velocity=(U, 0, 0)),
    }
    dom = Domain.from_grid(grid, bcs)
    # fixed inner-iteration count for comparable per-step work
    st = InnerSettings(
        order=order,
        limiter="vanalbada" if order == 2 else "none",
        preconditioned=True,
        eps_mach=0.05,
        tolerance=1e-30,
        max_inner=4,
        pseudo_cfl=20.0,
    )
    s = FlowSolver(dom, gas, dt=5e-4, settings=st, n_workers=workers)
    s.set_state([P0, 0, 0, 0, T0, 0.0])
    return s


def _time_steps(solver: FlowSolver, n_steps: int, warmup: int = 1) -> float:
    for _ in range(warmup):
        solver.advance()
    t0 = time.perf_counter()
    for _ in range(n_steps):
        solver.advance()
    return (time.perf_counter() - t0) / n_steps


def bench_weak(worker_counts, out_dir, steps: int = 6, cpe: int = 16) -> dict:
    rows = []
    t1 = None
    for w in worker_counts:
        s = _cavity_solver(ny_cubes=2 * w, workers=w, cpe=cpe)
        dt = _time_steps(s, steps)
        s.pool.close()
        if t1 is None:
            t1 = dt
        rows.append(
            {
                "workers": w,
                "cubes": s.dom.nc,
                "cells": s.dom.nc * cpe**3,
                "step_s": dt,
                "efficiency_pct": 100.0 * t1 / dt,
            }
        )
    report = {"suite": "cavity-weak", "hardware_cores": os.cpu_count(), "rows": rows}
    _write_report(report, out_dir, "weak")
    return report


def bench_strong(worker_counts, out_dir, steps: int = 6, cpe: int = 16) -> dict:
    rows = []
    t1 = None
    base_ny = 2 * max(worker_counts)
    for w in worker_counts:
        s = _cavity_solver(ny_cubes=base_ny, workers=w, cpe=cpe)
        dt = _time_steps(s, steps)
        s.pool.close()
        if t1 is None:
            t1 = dt
        rows.append(
            {
                "workers": w,
                "cubes": s.dom.nc,
                "step_s": dt,
                "speedup": t1 / dt,
                "efficiency_pct": 100.0 * t1 / (dt * w / worker_counts[0]),
            }
        )
    report = {"suite": "cavity-strong", "hardware_cores": os.cpu_count(), "rows": rows}
    _write_report(report, out_dir, "strong")
    return report


def bench_kernels(out_dir, steps: int = 8, cpe: int = 16, order: int = 5) -> dict:
    s = _cavity_solver(ny_cubes=2, workers=1, cpe=cpe, order=order)
    s.advance()  # warmup / allocation
    s.timers.clear()
    t0 = time.perf_counter()
    for _ in range(steps):
        s.advance()
    total = time.perf_counter() - t0
    timers = dict(s.timers)
    s.pool.close()
    measured = sum(timers.values())
    shares = {k: 100.0 * v / total for k, v in sorted(timers.items())}
    shares["other"] = 100.0 * max(total - measured, 0.0) / total
    report = {
        "suite": "kernels",
        "order": order,
        "steps": steps,
        "step_s": total / steps,
        "kernel_seconds": {k: round(v, 6) for k, v in timers.items()},
        "share_pct": {k: round(v, 3) for k, v in shares.items()},
    }
    _write_report(report, out_dir, "kernels")
    return report


def _write_report(report: dict, out_dir, name: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"bench_{name}.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    lines = []
    if "rows" in report:
        keys = list(report["rows"][0].keys())
        lines.append(",".join(keys))
        for r in report["rows"]:
            lines.append(",".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys))
    else:
        lines.append("kernel,share_pct")
        for k, v in report["share_pct"].items():
            lines.append(f"{k},{v}")
    (out / f"bench_{name}.csv").write_text("\n".join(lines) + "\n")


def format_table(report: dict) -> str:
    if "rows" in report:
        keys = list(report["rows"][0].keys())
        widths = [max(len(k), 12) for k in keys]
        out = ["  ".join(k.ljust(w) for k, w in zip(keys, widths))]
        for r in report["rows"]:
            cells = [
                (f"{r[k]:.4g}" if isinstance(r[k], float) else str(r[k])).ljust(w)
                for k, w in zip(keys, widths)
            ]
            out.append("  ".join(cells))
        return "\n".join(out)
    out = [f"kernel share of step time (order {report['order']}):"]
    for k, v in report["share_pct"].items():
        out.append(f"  {k:<12} {v:6.2f} %")
    return "\n".join(out)
