import json
from pathlib import Path

import numpy as np
import pytest

from cubelet.cli.config import ConfigError, ScenarioConfig
from cubelet.cli.main import main
from cubelet.cli.pipeline import cmd_mesh, cmd_risk, cmd_run, run_single
from cubelet.ibm import box_tris, write_binary_stl


def tiny_config(tmp_path: Path, with_geometry=True, duration=0.3, multi_run=False):
    stl = tmp_path / "blk.stl"
    write_binary_stl(stl, box_tris([0.45, 0.45, 0.1], [0.75, 0.75, 0.3]))
    raw = {
        "name": "tiny",
        "domain_m": {"lo": [0, 0, 0], "hi": [1.2, 1.2, 0.6]},
        "grid": {
            "root_cube_size_m": 0.6,
            "cells_per_edge": 4,
            "wall_spacing_m": 0.15,
            "far_spacing_m": 0.15,
        },
        "gas": {"gravity_m_per_s2": [0, 0, 0]},
        "geometry": [{"path": "blk.stl"}] if with_geometry else [],
        "boundaries": {
            "x-": {"kind": "wall"},
            "x+": {"kind": "wall"},
            "y-": {"kind": "wall"},
            "y+": {"kind": "wall"},
            "z-": {"kind": "wall"},
            "z+": {"kind": "wall"},
        },
        "subjects": [
            {"name": "L", "nose_m": [0.3, 0.6, 0.45], "forward": [1, 0, 0],
             "zone_size_m": [0.3, 0.3, 0.2]},
            {"name": "R", "nose_m": [0.9, 0.6, 0.45], "forward": [-1, 0, 0],
             "zone_size_m": [0.3, 0.3, 0.2]},
        ],
        "emissions": [
            {"subject": "L", "count": 40, "geometric_mean_diameter_m": 8e-6,
             "speed_m_per_s": 0.5, "period_s": 0.1}
        ],
        "run": {
            "dt_s": 0.05,
            "duration_s": duration,
            "seed": 7,
            "snapshot_every_steps": 2,
            "restart_every_steps": 2,
            "inner": {"max_iterations": 4, "tolerance": 0.01},
        },
        "risk": {"multi_run": multi_run},
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(raw, indent=1))
    return path


# ------------------------------------------------------------------- config
def test_config_roundtrip_identity(tmp_path):
    p = tiny_config(tmp_path)
    cfg = ScenarioConfig.load(p)
    # parse -> serialize -> parse is the identity on the canonical tree
    text = cfg.canonical_json()
    cfg2 = ScenarioConfig(json.loads(text), tmp_path)
    assert cfg2.canonical_json() == text
    assert cfg2.config_hash() == cfg.config_hash()


def test_unknown_keys_rejected(tmp_path):
    p = tiny_config(tmp_path)
    raw = json.loads(p.read_text())
    raw["grid"]["cell_size"] = 0.1  # typo for wall_spacing_m
    p.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="unknown keys"):
        ScenarioConfig.load(p)


def test_missing_required_key(tmp_path):
    p = tiny_config(tmp_path)
    raw = json.loads(p.read_text())
    del raw["run"]["dt_s"]
    p.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="dt_s"):
        ScenarioConfig.load(p)


def test_missing_geometry_file_names_key(tmp_path):
    p = tiny_config(tmp_path)
    raw = json.loads(p.read_text())
    raw["geometry"][0]["path"] = "missing.stl"
    p.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="geometry\\[0\\].path"):
        ScenarioConfig.load(p)


# ----------------------------------------------------------------- commands
def test_mesh_and_manifest(tmp_path):
    cfg = ScenarioConfig.load(tiny_config(tmp_path))
    man = cmd_mesh(cfg, tmp_path / "mesh")
    assert man["cubes"] == 4
    assert (tmp_path / "mesh" / "cube_outlines.vtk").exists()
    assert (tmp_path / "mesh" / "ibm_mask.vtk").exists()
    # every output is inventoried with a checksum
    for rel, digest in man["outputs"].items():
        f = tmp_path / "mesh" / rel
        assert f.exists()
        assert len(digest) == 64


def test_zero_duration_writes_initial_state_only(tmp_path):
    cfg = ScenarioConfig.load(tiny_config(tmp_path, duration=0.0))
    man = run_single(cfg, tmp_path / "run0")
    snaps = sorted((tmp_path / "run0").glob("particles_*.csv"))
    assert len(snaps) == 1 and snaps[0].name == "particles_000000.csv"
    assert man["steps"] == 0


def test_run_manifest_checksums_and_counts(tmp_path):
    cfg = ScenarioConfig.load(tiny_config(tmp_path))
    man = run_single(cfg, tmp_path / "run")
    assert man["steps"] == 6
    assert sum(man["particle_counts"].values()) > 0
    for rel, digest in man["outputs"].items():
        f = tmp_path / "run" / rel
        assert f.exists()
        import hashlib

        assert hashlib.sha256(f.read_bytes()).hexdigest() == digest


def test_config_hash_mismatch_refused(tmp_path):
    cfg = ScenarioConfig.load(tiny_config(tmp_path))
    with pytest.raises(ValueError, match="mesh artifacts"):
        run_single(cfg, tmp_path / "run", mesh_hash="deadbeef")


def test_resume_bitwise_identical(tmp_path):
    p = tiny_config(tmp_path)
    cfg = ScenarioConfig.load(p)
    man_full = run_single(cfg, tmp_path / "full")

    # interrupted run: stop after 4 of 6 steps by running a shortened config,
    # then resume from its latest restart
    raw = json.loads(p.read_text())
    raw["run"]["duration_s"] = 0.2  # 4 steps
    p2 = tmp_path / "short.json"
    p2.write_text(json.dumps(raw))
    cfg_short = ScenarioConfig(json.loads(p2.read_text()), tmp_path)
    run_single(cfg_short, tmp_path / "part")

    man_res = run_single(cfg, tmp_path / "resumed", resume=tmp_path / "part" / "restart_latest.rst")
    final_a = (tmp_path / "full" / "particles_000006.csv").read_bytes()
    final_b = (tmp_path / "resumed" / "particles_000006.csv").read_bytes()
    assert final_a == final_b
    ra = (tmp_path / "full" / "restart_final.rst").read_bytes()
    rb = (tmp_path / "resumed" / "restart_final.rst").read_bytes()
    assert ra == rb


def test_determinism_same_seed_same_outputs(tmp_path):
    cfg = ScenarioConfig.load(tiny_config(tmp_path))
    m1 = run_single(cfg, tmp_path / "r1")
    m2 = run_single(cfg, tmp_path / "r2")
    ex_timing = {k: v for k, v in m1["outputs"].items() if not k.endswith("manifest.json")}
    ex2 = {k: v for k, v in m2["outputs"].items() if not k.endswith("manifest.json")}
    assert ex_timing == ex2


def test_risk_multirun_and_matrix(tmp_path):
    cfg = ScenarioConfig.load(tiny_config(tmp_path, multi_run=True, duration=0.3))
    cmd_run(cfg, tmp_path / "mr")
    out = cmd_risk(cfg, tmp_path / "mr", tmp_path / "mr" / "risk")
    assert "aggregate_percent" in out
    assert (tmp_path / "mr" / "risk" / "risk_matrix.csv").exists()
    assert (tmp_path / "mr" / "risk" / "risk_matrix_long.csv").exists()


def test_risk_refuses_mismatched_config(tmp_path):
    p = tiny_config(tmp_path)
    cfg = ScenarioConfig.load(p)
    run_single(cfg, tmp_path / "run")
    raw = json.loads(p.read_text())
    raw["run"]["seed"] = 8  # different config
    cfg2 = ScenarioConfig(raw, tmp_path)
    with pytest.raises(ValueError, match="different config"):
        cmd_risk(cfg2, tmp_path / "run", tmp_path / "risk")


def test_empty_particles_zero_matrix(tmp_path):
    p = tiny_config(tmp_path, multi_run=True)
    raw = json.loads(p.read_text())
    raw["emissions"] = []
    p.write_text(json.dumps(raw))
    cfg = ScenarioConfig.load(p)
    cmd_run(cfg, tmp_path / "mr")
    out = cmd_risk(cfg, tmp_path / "mr", tmp_path / "risk")
    assert out["aggregate_percent"] == 0.0


# ------------------------------------------------------------------- main()
def test_cli_exit_codes(tmp_path, capsys):
    p = tiny_config(tmp_path)
    assert main(["validate", "--config", str(p)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--config", str(bad)]) == 2
    raw = json.loads(p.read_text())
    raw["grid"]["typo_key"] = 1
    bad2 = tmp_path / "bad2.json"
    bad2.write_text(json.dumps(raw))
    assert main(["validate", "--config", str(bad2)]) == 2


def test_cli_mesh_run_risk_end_to_end(tmp_path):
    p = tiny_config(tmp_path)
    assert main(["mesh", "--config", str(p), "--out", str(tmp_path / "m")]) == 0
    assert (
        main(
            ["run", "--config", str(p), "--out", str(tmp_path / "r"), "--mesh", str(tmp_path / "m")]
        )
        == 0
    )
    assert (
        main(
            [
                "risk",
                "--config",
                str(p),
                "--run-dir",
                str(tmp_path / "r"),
                "--out",
                str(tmp_path / "k"),
            ]
        )
        == 0
    )
