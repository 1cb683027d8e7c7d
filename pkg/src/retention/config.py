"""Run configuration: defaults, validation and geometry resolution.

A config is a JSON object. Every run stores the fully resolved version in
its manifest, so feeding a manifest back as ``--config`` repeats the run.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from retention.errors import ConfigError
from retention.geometry import (
    DIPOLE_CIRCULAR,
    AtomArray,
    GeometrySpec,
    dipole_to_json,
    make_geometry,
    reference_structure,
)
from retention.outputs import is_manifest

COMMANDS = ("spectrum", "dynamics", "optimize", "farfield", "study")
STUDY_KINDS = ("robustness", "correlation", "seed_dependence")

DEFAULTS: dict = {
    "time": {"t_end": 30.0, "samples": 3001},
    "t_star": 30.0,
    "surrogate": {"alpha": 1.0, "beta": 3.0},
    "dynamics": {"ode": True, "ode_substeps": None},
    "optimizer": {
        "r_min": 0.1,
        "n_runs": 1,
        "sigma": 0.01,
        "max_iterations": 500,
        "ftol": 1e-8,
        "step_tol": 1e-10,
        "constraint_tol": 1e-9,
        "fd_step": 1e-6,
        "method": "SLSQP",
    },
    "farfield": {"order": 64, "refine_orders": [32, 64, 128], "pattern_modes": "largest"},
    "study": {
        "kind": "robustness",
        "sigma_xy": 0.0,
        "sigma_z": 0.0,
        "n_trials": 100,
        "sigma": 0.01,
        "n_structures": 100,
        "in_plane_only": False,
        "include_storage": True,
        "cluster_threshold": 0.02,
    },
}

# sections each command reads; others are dropped from the resolved config
SECTIONS = {
    "spectrum": ["surrogate"],
    "dynamics": ["time", "t_star", "dynamics"],
    "optimize": ["surrogate", "optimizer", "t_star"],
    "farfield": ["farfield"],
    "study": ["time", "t_star", "surrogate", "optimizer", "study"],
}


def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def draw_seed() -> int:
    """Fresh 64-bit master seed from OS entropy."""
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if is_manifest(data):
        data = data["config"]
    return data


def resolve_geometry(geom: dict, base_dir: Path | None = None) -> dict:
    """Canonical geometry entry; structure files are inlined so the result is self-contained."""
    if not isinstance(geom, dict):
        raise ConfigError("geometry must be an object")
    geom = dict(geom)
    if "structure_file" in geom:
        path = Path(geom.pop("structure_file"))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"structure file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        data = data.get("structure", data)
        if geom:
            raise ConfigError("structure_file cannot be combined with other geometry keys")
        return {"positions": data["positions"], **{k: data[k] for k in ("storage_index", "dipole", "gamma0", "omega0") if k in data}}
    if "positions" in geom:
        allowed = {"positions", "storage_index", "dipole", "gamma0", "omega0"}
        extra = set(geom) - allowed
        if extra:
            raise ConfigError(f"unknown geometry keys {sorted(extra)}")
        geom.setdefault("storage_index", 0)
        geom.setdefault("dipole", dipole_to_json(DIPOLE_CIRCULAR))
        return geom
    if "r_min" in geom:
        allowed = {"kind", "n", "r_min", "dipole"}
        extra = set(geom) - allowed
        if extra:
            raise ConfigError(f"unknown geometry keys {sorted(extra)}")
        geom.setdefault("dipole", dipole_to_json(DIPOLE_CIRCULAR))
        for key in ("kind", "n"):
            if key not in geom:
                raise ConfigError(f"geometry needs {key!r}")
        return geom
    allowed = {"kind", "n", "a", "dipole", "storage_on_site"}
    extra = set(geom) - allowed
    if extra:
        raise ConfigError(f"unknown geometry keys {sorted(extra)}")
    for key in ("kind", "n", "a"):
        if key not in geom:
            raise ConfigError(f"geometry needs {key!r}")
    geom.setdefault("dipole", dipole_to_json(DIPOLE_CIRCULAR))
    geom.setdefault("storage_on_site", False)
    return geom


def build_array(geom: dict) -> AtomArray:
    """AtomArray from a resolved geometry entry."""
    try:
        if "positions" in geom:
            return AtomArray.from_dict(geom)
        if "r_min" in geom:
            return reference_structure(geom["kind"], geom["n"], geom["r_min"], dipole=geom["dipole"])
        spec = GeometrySpec(geom["kind"], geom["n"], geom["a"], geom["dipole"])
        kw = {"storage_on_site": True} if geom.get("storage_on_site") else {}
        if kw and spec.kind != "square":
            raise ConfigError("storage_on_site applies to square arrays only")
        return make_geometry(spec, **kw)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad geometry entry: {exc}") from exc


def resolve(command: str, raw: dict, seed: int | None = None, base_dir: Path | None = None) -> dict:
    """Fully resolved config for ``command``; command-line ``seed`` overrides the file."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = dict(raw)
    raw.pop("command", None)
    if "geometry" not in raw:
        raise ConfigError("config needs a 'geometry' entry")
    out: dict = {"command": command, "geometry": resolve_geometry(raw.pop("geometry"), base_dir)}
    file_seed = raw.pop("seed", None)
    for key in SECTIONS[command]:
        value = raw.pop(key, None)
        if isinstance(DEFAULTS[key], dict):
            out[key] = _merge(DEFAULTS[key], value or {}, f"{key}.")
        else:
            out[key] = DEFAULTS[key] if value is None else value
    if raw:
        raise ConfigError(f"keys not used by '{command}': {sorted(raw)}")
    chosen = seed if seed is not None else file_seed
    if chosen is None:
        chosen = draw_seed()
    if not (isinstance(chosen, int) and 0 <= chosen < 2**64):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    out["seed"] = int(chosen)
    _validate(out)
    return out


def _validate(cfg: dict) -> None:
    if "time" in cfg:
        t = cfg["time"]
        if not (t["t_end"] > 0 and int(t["samples"]) >= 2):
            raise ConfigError("time.t_end must be positive and time.samples >= 2")
        if cfg["t_star"] > t["t_end"] or cfg["t_star"] <= 0:
            raise ConfigError("t_star must lie in (0, time.t_end]")
    if "study" in cfg and cfg["study"]["kind"] not in STUDY_KINDS:
        raise ConfigError(f"study.kind must be one of {STUDY_KINDS}")
    if "farfield" in cfg:
        f = cfg["farfield"]
        if int(f["order"]) < 1 or any(int(o) < 1 for o in f["refine_orders"]):
            raise ConfigError("quadrature orders must be positive")
        pm = f["pattern_modes"]
        if not (pm in ("largest", "all") or (isinstance(pm, list) and all(isinstance(i, int) for i in pm))):
            raise ConfigError("farfield.pattern_modes must be 'largest', 'all' or a list of mode indices")
    if "optimizer" in cfg:
        o = cfg["optimizer"]
        if int(o["n_runs"]) < 1 or o["sigma"] < 0 or not o["r_min"] > 0:
            raise ConfigError("optimizer needs n_runs >= 1, sigma >= 0, r_min > 0")
