"""Run configuration: JSON schema, versioned defaults, validation.

Unknown keys are rejected everywhere.  Only two environment overrides
exist: RVMLKIT_OUTPUT_DIR and RVMLKIT_THREADS.
"""

import json
import os

import jsonschema

from .errors import ConfigurationError

SCHEMA_VERSION = 1

#: Tolerance defaults with the reasoning recorded next to the numbers.
TOLERANCES = {
    "tol_null": 5e-2,
    "tol_null_rationale":
        "invariant-residual budget of the raw operator at grid (12, 6.0); "
        "second-order interior consistency halves it (at least) per n -> 2n",
    "tol_basis": 1e-3,
    "tol_basis_rationale":
        "Gram-matrix budget; grid-consistent normalizers put the actual "
        "deviation at rounding, the budget covers downstream uses",
    "tol_gamma": 5e-2,
    "tol_gamma_rationale":
        "relative invariant-moment budget of the bilinear form at 12^3; "
        "measured values sit near 1e-3 and halve under refinement",
    "quad_tol": 1e-10,
    "quad_tol_rationale": "radial adaptive quadrature absolute target",
}

_GRID = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_per_axis": {"type": "integer", "minimum": 2},
        "p_max": {"type": "number", "exclusiveMinimum": 0},
    },
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"type": "integer", "const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "grid": _GRID,
        "grid_refined": _GRID,
        "species": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mass_plus": {"type": "number", "exclusiveMinimum": 0},
                "mass_minus": {"type": "number", "exclusiveMinimum": 0},
                "charge_plus": {"type": "number", "exclusiveMinimum": 0},
                "charge_minus": {"type": "number", "exclusiveMinimum": 0},
                "k_bT": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: ({"type": "string"} if k.endswith("_rationale")
                               else {"type": "number", "exclusiveMinimum": 0})
                           for k in TOLERANCES},
        },
        "relaxation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid_n": {"type": "integer", "minimum": 2},
                "decades": {"type": "number", "exclusiveMinimum": 0},
                "n_records": {"type": "integer", "minimum": 8},
                "nonlinear_epsilon": {"type": "number", "minimum": 0},
            },
        },
        "billiard": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "domain": {"enum": ["disk", "ball"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "n_particles": {"type": "integer", "minimum": 1},
                "reflections": {"type": "integer", "minimum": 1},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "cavity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cells": {"type": "integer", "minimum": 4},
                "n_steps": {"type": "integer", "minimum": 10},
                "cfl_factor": {"type": "number", "exclusiveMinimum": 0,
                               "maximum": 1},
            },
        },
        "skip_refined": {"type": "boolean"},
    },
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 20260810,
    "threads": 1,
    "output_dir": "runs",
    "grid": {"n_per_axis": 12, "p_max": 6.0},
    "grid_refined": {"n_per_axis": 16, "p_max": 6.0},
    "species": {"mass_plus": 1.0, "mass_minus": 1.0,
                "charge_plus": 1.0, "charge_minus": 1.0, "k_bT": 1.0},
    "tolerances": dict(TOLERANCES),
    "relaxation": {"grid_n": 10, "decades": 11.0, "n_records": 200,
                   "nonlinear_epsilon": 0.0},
    "billiard": {"domain": "disk", "radius": 1.0, "n_particles": 1000,
                 "reflections": 10000, "t_end": 200.0},
    "cavity": {"cells": 16, "n_steps": 10000, "cfl_factor": 0.5},
    "skip_refined": False,
}


def _merge(base, extra):
    out = dict(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(source=None):
    """Validate and fill a config from a path, dict, or None (defaults).

    Environment overrides (output dir, threads) are applied last.
    """
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = source
    else:
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {source}: {exc}")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config schema violation at {path}: "
                                 f"{exc.message}")
    cfg = _merge(DEFAULTS, raw)

    if "RVMLKIT_OUTPUT_DIR" in os.environ:
        cfg["output_dir"] = os.environ["RVMLKIT_OUTPUT_DIR"]
    if "RVMLKIT_THREADS" in os.environ:
        try:
            cfg["threads"] = max(1, int(os.environ["RVMLKIT_THREADS"]))
        except ValueError:
            raise ConfigurationError("RVMLKIT_THREADS must be an integer")
    return cfg


def species_pair(cfg):
    from .equilibria import SpeciesParams, PlasmaPair

    s = cfg["species"]
    return PlasmaPair(
        plus=SpeciesParams(mass=s["mass_plus"], charge=s["charge_plus"],
                           sign=+1, k_bT=s["k_bT"]),
        minus=SpeciesParams(mass=s["mass_minus"], charge=s["charge_minus"],
                            sign=-1, k_bT=s["k_bT"]))
