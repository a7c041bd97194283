"""Strict scenario configuration.

JSON with SI units spelled out in key names.  Unknown keys are rejected so a
typo cannot silently fall back to a default; every run reports the resolved
tree and its hash in the manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..flow import BCSpec, GasModel, InnerSettings
from ..ibm import WallTag


class ConfigError(ValueError):
    pass


def _require(section: dict, path: str, allowed: dict):
    """Check key set; returns dict with defaults applied.

    allowed: key -> (required, default).  Rejects unknown keys.
    """
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    out = {}
    for key, (required, default) in allowed.items():
        if key in section:
            out[key] = section[key]
        elif required:
            raise ConfigError(f"{path}: missing required key {key!r}")
        else:
            out[key] = default
    return out


def _vec3(v, path):
    if not (isinstance(v, (list, tuple)) and len(v) == 3):
        raise ConfigError(f"{path}: expected a 3-vector")
    return [float(x) for x in v]


_BC_KEYS = {
    "kind": (True, None),
    "velocity_m_per_s": (False, [0.0, 0.0, 0.0]),
    "temperature_K": (False, None),
    "pressure_Pa": (False, 101325.0),
    "Y": (False, None),
    "patches": (False, []),
}

_BC_KINDS = ("wall", "slip", "inlet", "outlet", "farfield", "periodic")


def _parse_bc(raw, path, n_species) -> BCSpec:
    c = _require(raw, path, _BC_KEYS)
    if c["kind"] not in _BC_KINDS:
        raise ConfigError(f"{path}.kind: must be one of {_BC_KINDS}")
    patches = []
    for i, p in enumerate(raw.get("patches", [])):
        pc = _require(
            p,
            f"{path}.patches[{i}]",
            {"lo_m": (True, None), "hi_m": (True, None), "bc": (True, None)},
        )
        lo2 = [float(x) for x in pc["lo_m"]]
        hi2 = [float(x) for x in pc["hi_m"]]
        if len(lo2) != 2 or len(hi2) != 2:
            raise ConfigError(f"{path}.patches[{i}]: lo_m/hi_m are 2-vectors in face coords")
        patches.append((lo2, hi2, _parse_bc(pc["bc"], f"{path}.patches[{i}].bc", n_species)))
    Y = c["Y"]
    if Y is None:
        Y = [0.0] * n_species
    if len(Y) != n_species:
        raise ConfigError(f"{path}.Y: expected {n_species} species fractions")
    return BCSpec(
        kind=c["kind"],
        velocity=tuple(_vec3(c["velocity_m_per_s"], f"{path}.velocity_m_per_s")),
        temperature_K=None if c["temperature_K"] is None else float(c["temperature_K"]),
        pressure_Pa=float(c["pressure_Pa"]),
        Y=tuple(float(y) for y in Y),
        patches=patches,
    )


class ScenarioConfig:
    """Resolved scenario; `raw` holds the canonical validated tree."""

    def __init__(self, raw: dict, base_dir: Path):
        self.base_dir = Path(base_dir)
        top = _require(
            raw,
            "config",
            {
                "name": (True, None),
                "domain_m": (True, None),
                "grid": (True, None),
                "gas": (False, {}),
                "geometry": (False, []),
                "boundaries": (True, None),
                "subjects": (False, []),
                "emissions": (False, []),
                "run": (True, None),
                "risk": (False, {}),
            },
        )
        self.name = str(top["name"])

        dom = _require(raw["domain_m"], "domain_m", {"lo": (True, None), "hi": (True, None)})
        self.domain_lo = _vec3(dom["lo"], "domain_m.lo")
        self.domain_hi = _vec3(dom["hi"], "domain_m.hi")

        g = _require(
            raw["grid"],
            "grid",
            {
                "root_cube_size_m": (True, None),
                "cells_per_edge": (False, 16),
                "halo_width": (False, 2),
                "wall_spacing_m": (True, None),
                "far_spacing_m": (True, None),
                "wall_band_m": (False, 0.0),
                "max_level": (False, 12),
            },
        )
        self.grid_cfg = {k: (int(v) if k in ("cells_per_edge", "halo_width", "max_level") else float(v)) for k, v in g.items()}

        gs = _require(
            raw.get("gas", {}),
            "gas",
            {
                "gamma": (False, 1.4),
                "gas_constant_J_per_kgK": (False, 287.0),
                "prandtl": (False, 0.72),
                "schmidt": (False, [1.0]),
                "species_names": (False, ["water_vapor"]),
                "viscosity_model": (False, "sutherland"),
                "viscosity_Pa_s": (False, None),
                "gravity_m_per_s2": (False, [0.0, 0.0, -9.81]),
                "ambient": (False, {}),
            },
        )
        amb = _require(
            gs["ambient"],
            "gas.ambient",
            {
                "pressure_Pa": (False, 101325.0),
                "temperature_K": (False, 293.15),
                "velocity_m_per_s": (False, [0.0, 0.0, 0.0]),
                "humidity_Y": (False, 0.007),
            },
        )
        if len(gs["schmidt"]) != len(gs["species_names"]):
            raise ConfigError("gas: schmidt and species_names lengths differ")
        if gs["viscosity_model"] not in ("sutherland", "constant"):
            raise ConfigError("gas.viscosity_model: sutherland or constant")
        if gs["viscosity_model"] == "constant" and gs["viscosity_Pa_s"] is None:
            raise ConfigError("gas.viscosity_Pa_s required for constant viscosity")
        self.ambient = {
            "P": float(amb["pressure_Pa"]),
            "T": float(amb["temperature_K"]),
            "u": _vec3(amb["velocity_m_per_s"], "gas.ambient.velocity_m_per_s"),
            "Y": float(amb["humidity_Y"]),
        }
        rho0 = self.ambient["P"] / (float(gs["gas_constant_J_per_kgK"]) * self.ambient["T"])
        self.gas = GasModel(
            gamma=float(gs["gamma"]),
            R=float(gs["gas_constant_J_per_kgK"]),
            prandtl=float(gs["prandtl"]),
            schmidt=tuple(float(s) for s in gs["schmidt"]),
            constant_mu=None if gs["viscosity_model"] == "sutherland" else float(gs["viscosity_Pa_s"]),
            rho0=rho0,
            gravity=tuple(_vec3(gs["gravity_m_per_s2"], "gas.gravity_m_per_s2")),
        )
        self.species_names = list(gs["species_names"])

        # geometry files with wall tags
        self.geometry = []
        for i, ent in enumerate(top["geometry"]):
            gc = _require(
                ent,
                f"geometry[{i}]",
                {
                    "path": (True, None),
                    "kind": (False, "wall"),
                    "velocity_m_per_s": (False, [0.0, 0.0, 0.0]),
                    "temperature_K": (False, None),
                },
            )
            p = self.base_dir / gc["path"]
            if not p.exists():
                raise ConfigError(f"geometry[{i}].path: file not found: {p}")
            self.geometry.append(
                {
                    "path": p,
                    "tag": WallTag(
                        name=f"geom{i}",
                        velocity_m_per_s=tuple(_vec3(gc["velocity_m_per_s"], f"geometry[{i}]")),
                        temperature_K=gc["temperature_K"],
                        kind=gc["kind"],
                    ),
                }
            )

        faces = ("x-", "x+", "y-", "y+", "z-", "z+")
        b = _require(raw["boundaries"], "boundaries", {f: (True, None) for f in faces})
        self.bcs = {f: _parse_bc(b[f], f"boundaries.{f}", self.gas.n_species) for f in faces}

        self.subjects = []
        for i, s in enumerate(top["subjects"]):
            sc = _require(
                s,
                f"subjects[{i}]",
                {
                    "name": (True, None),
                    "nose_m": (True, None),
                    "forward": (False, [1.0, 0.0, 0.0]),
                    "zone_size_m": (False, [0.20, 0.20, 0.15]),
                },
            )
            self.subjects.append(
                {
                    "name": str(sc["name"]),
                    "nose_m": _vec3(sc["nose_m"], f"subjects[{i}].nose_m"),
                    "forward": _vec3(sc["forward"], f"subjects[{i}].forward"),
                    "zone_size_m": _vec3(sc["zone_size_m"], f"subjects[{i}].zone_size_m"),
                }
            )
        names = [s["name"] for s in self.subjects]
        if len(set(names)) != len(names):
            raise ConfigError("subjects: names must be unique")

        self.emissions = []
        for i, e in enumerate(top["emissions"]):
            ec = _require(
                e,
                f"emissions[{i}]",
                {
                    "subject": (False, None),
                    "source_m": (False, None),
                    "direction": (False, None),
                    "event": (False, "speech"),
                    "count": (False, 100),
                    "geometric_mean_diameter_m": (False, 10e-6),
                    "geometric_sigma": (False, 1.6),
                    "diameters_m": (False, None),
                    "speed_m_per_s": (False, 1.0),
                    "spread_deg": (False, 15.0),
                    "temperature_K": (False, 308.0),
                    "period_s": (False, None),
                    "start_s": (False, 0.0),
                },
            )
            if (ec["subject"] is None) == (ec["source_m"] is None):
                raise ConfigError(f"emissions[{i}]: give exactly one of subject / source_m")
            if ec["subject"] is not None and ec["subject"] not in names:
                raise ConfigError(f"emissions[{i}].subject: unknown subject {ec['subject']!r}")
            self.emissions.append(ec)

        r = _require(
            raw["run"],
            "run",
            {
                "dt_s": (True, None),
                "duration_s": (True, None),
                "seed": (False, 0),
                "workers": (False, None),
                "snapshot_every_steps": (False, 10),
                "field_snapshot_every_steps": (False, 0),
                "restart_every_steps": (False, 0),
                "particle_cfl": (False, 0.5),
                "inner": (False, {}),
            },
        )
        inner = _require(
            r["inner"],
            "run.inner",
            {
                "order": (False, 2),
                "limiter": (False, "vanalbada"),
                "preconditioning": (False, True),
                "epsilon_mach": (False, 1e-3),
                "pseudo_cfl": (False, 20.0),
                "tolerance": (False, 1e-3),
                "max_iterations": (False, 30),
            },
        )
        self.run_cfg = {
            "dt_s": float(r["dt_s"]),
            "duration_s": float(r["duration_s"]),
            "seed": int(r["seed"]),
            "workers": None if r["workers"] is None else int(r["workers"]),
            "snapshot_every_steps": int(r["snapshot_every_steps"]),
            "field_snapshot_every_steps": int(r["field_snapshot_every_steps"]),
            "restart_every_steps": int(r["restart_every_steps"]),
            "particle_cfl": float(r["particle_cfl"]),
        }
        self.inner = InnerSettings(
            order=int(inner["order"]),
            limiter=str(inner["limiter"]),
            preconditioned=bool(inner["preconditioning"]),
            eps_mach=float(inner["epsilon_mach"]),
            pseudo_cfl=float(inner["pseudo_cfl"]),
            tolerance=float(inner["tolerance"]),
            max_inner=int(inner["max_iterations"]),
        )

        rk = _require(
            raw.get("risk", {}),
            "risk",
            {
                "breathing_rate_m3_per_s": (False, 8.0 / 60000.0),
                "viral_load_per_mL": (False, 1e7),
                "infectious_dose_virions": (False, 300.0),
                "exposure_window_s": (False, None),
                "quasi_steady": (False, False),
                "multi_run": (False, False),
            },
        )
        self.risk_cfg = {
            "B": float(rk["breathing_rate_m3_per_s"]),
            "rho_v_per_m3": float(rk["viral_load_per_mL"]) * 1e6,
            "N0": float(rk["infectious_dose_virions"]),
            "window_s": rk["exposure_window_s"],
            "quasi_steady": bool(rk["quasi_steady"]),
            "multi_run": bool(rk["multi_run"]),
        }

        # canonical resolved tree for hashing / round trips
        self.raw = raw

    # ------------------------------------------------------------------- i/o
    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        return cls(raw, path.parent)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]
