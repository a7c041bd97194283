"""Command line entry point.

Subcommands: mesh, run, risk, bench, validate.  Exit codes: 0 success,
2 configuration error, 3 numerical divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..flow import SolverDivergence
from ..pool import default_workers
from .config import ConfigError, ScenarioConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _add_common(p):
    p.add_argument("--config", required=True, help="scenario config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default CUBELET_THREADS or 1)")
    p.add_argument("--seed", type=int, default=None, help="override run seed")


def build_parser():
    ap = argparse.ArgumentParser(prog="cubelet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build grid + immersed-boundary mask artifacts")
    _add_common(p)

    p = sub.add_parser("run", help="run the flow + droplet simulation")
    _add_common(p)
    p.add_argument("--resume", default=None, help="restart file to resume from")
    p.add_argument("--mesh", default=None, help="mesh output dir to validate the config hash against")

    p = sub.add_parser("risk", help="evaluate breathing-zone risk from run outputs")
    _add_common(p)
    p.add_argument("--run-dir", required=True, help="directory with run outputs")

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", choices=("cavity-weak", "cavity-strong", "kernels"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", default=None, help="comma list of worker counts (scaling suites)")
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--cells-per-edge", type=int, default=16)

    p = sub.add_parser("validate", help="parse and lint a scenario config")
    p.add_argument("--config", required=True)
    return ap


def _load(path) -> ScenarioConfig:
    return ScenarioConfig.load(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _load(args.config)
            print(f"config ok: {cfg.name} (hash {cfg.config_hash()})")
            return EXIT_OK

        if args.command == "bench":
            from . import bench

            if args.suite == "kernels":
                report = bench.bench_kernels(args.out, steps=args.steps, cpe=args.cells_per_edge)
            else:
                counts = (
                    [int(x) for x in args.workers.split(",")]
                    if args.workers
                    else [1, 2, 4, 8]
                )
                fn = bench.bench_weak if args.suite == "cavity-weak" else bench.bench_strong
                report = fn(counts, args.out, steps=args.steps, cpe=args.cells_per_edge)
            print(bench.format_table(report))
            return EXIT_OK

        cfg = _load(args.config)
        if args.workers is not None:
            cfg.run_cfg["workers"] = args.workers
        if args.seed is not None:
            cfg.run_cfg["seed"] = args.seed

        from . import pipeline

        if args.command == "mesh":
            man = pipeline.cmd_mesh(cfg, args.out)
            print(
                f"meshed {man['cubes']} cubes / {man['cells']} cells in "
                f"{man['preprocessing_wall_s']:.2f} s (config {man['config_hash']})"
            )
            return EXIT_OK

        if args.command == "run":
            mesh_hash = None
            if args.mesh:
                mman = json.loads(open(os.path.join(args.mesh, "mesh_manifest.json")).read())
                mesh_hash = mman["config_hash"]
            man = pipeline.cmd_run(cfg, args.out, resume=args.resume, mesh_hash=mesh_hash)
            if "runs" in man:
                print(f"multi-run complete: {sorted(man['runs'])}")
            else:
                print(
                    f"run complete: {man['steps']} steps, particles {man['particle_counts']}"
                )
            return EXIT_OK

        if args.command == "risk":
            out = pipeline.cmd_risk(cfg, args.run_dir, args.out)
            if "aggregate_percent" in out:
                print(f"aggregate risk: {out['aggregate_percent']:.3f} %")
            else:
                print(json.dumps(out, indent=2, sort_keys=True))
            return EXIT_OK

        raise AssertionError("unreachable")
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverDivergence as e:
        print(f"numerical divergence: {e} {e.diagnostics}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FileNotFoundError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
